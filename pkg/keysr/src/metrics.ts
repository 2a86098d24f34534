/** PSNR between 8-bit planes (after quantization), 100 dB cap on identity. */

import { quantizeU8 } from "./resample";

export function psnrU8(a: Uint8Array, b: Uint8Array): number {
    if (a.length !== b.length) throw new Error("psnr: size mismatch");
    let sum = 0;
    for (let i = 0; i < a.length; i++) {
        const d = a[i] - b[i];
        sum += d * d;
    }
    if (sum === 0) return 100;
    const mse = sum / a.length;
    return Math.min(100, 10 * Math.log10((255 * 255) / mse));
}

/** PSNR of [0,1]-scaled planes measured in 8-bit space. */
export function psnrPlanes(a: Float64Array, b: Float64Array, scale = 255): number {
    const qa = quantizeU8(scaleArray(a, scale));
    const qb = quantizeU8(scaleArray(b, scale));
    return psnrU8(qa, qb);
}

function scaleArray(x: Float64Array, s: number): Float64Array {
    const out = new Float64Array(x.length);
    for (let i = 0; i < x.length; i++) out[i] = x[i] * s;
    return out;
}
