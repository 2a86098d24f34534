/**
 * Bicubic 4x resampling on plain Float64Array planes (Keys kernel,
 * a = -0.5, align-centers grid, clamp-to-edge). Matches the transmission
 * side's convention so the residual skip and baselines line up.
 */

export function cubicWeight(t: number): number {
    const a = -0.5;
    t = Math.abs(t);
    if (t < 1) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
    if (t < 2) return a * (t * t * t - 5 * t * t + 8 * t - 4);
    return 0;
}

function resampleAxis(src: Float64Array, srcLen: number, lines: number, stride: number, lineStride: number, down: boolean, out: Float64Array, outLen: number, outStride: number, outLineStride: number): void {
    for (let o = 0; o < outLen; o++) {
        const s = down ? 4 * o + 1.5 : (o - 1.5) / 4;
        const base = Math.floor(s);
        const i0 = Math.min(srcLen - 1, Math.max(0, base - 1));
        const i1 = Math.min(srcLen - 1, Math.max(0, base));
        const i2 = Math.min(srcLen - 1, Math.max(0, base + 1));
        const i3 = Math.min(srcLen - 1, Math.max(0, base + 2));
        const w0 = cubicWeight(s - (base - 1));
        const w1 = cubicWeight(s - base);
        const w2 = cubicWeight(s - (base + 1));
        const w3 = cubicWeight(s - (base + 2));
        for (let line = 0; line < lines; line++) {
            const sb = line * lineStride;
            out[line * outLineStride + o * outStride] =
                w0 * src[sb + i0 * stride] +
                w1 * src[sb + i1 * stride] +
                w2 * src[sb + i2 * stride] +
                w3 * src[sb + i3 * stride];
        }
    }
}

export function downsample4x(plane: Float64Array, h: number, w: number): Float64Array {
    if (h % 4 || w % 4) throw new Error(`dimensions ${w}x${h} not divisible by 4`);
    const oh = h / 4, ow = w / 4;
    const tmp = new Float64Array(oh * w);
    resampleAxis(plane, h, w, w, 1, true, tmp, oh, w, 1);
    const out = new Float64Array(oh * ow);
    resampleAxis(tmp, w, oh, 1, w, true, out, ow, 1, ow);
    return out;
}

export function upsample4x(plane: Float64Array, h: number, w: number): Float64Array {
    const oh = h * 4, ow = w * 4;
    const tmp = new Float64Array(oh * w);
    resampleAxis(plane, h, w, w, 1, false, tmp, oh, w, 1);
    const out = new Float64Array(oh * ow);
    resampleAxis(tmp, w, oh, 1, w, false, out, ow, 1, ow);
    return out;
}

export function quantizeU8(plane: Float64Array): Uint8Array {
    const out = new Uint8Array(plane.length);
    for (let i = 0; i < plane.length; i++) {
        const v = plane[i] >= 0 ? Math.floor(plane[i] + 0.5) : Math.ceil(plane[i] - 0.5);
        out[i] = Math.min(255, Math.max(0, v));
    }
    return out;
}
