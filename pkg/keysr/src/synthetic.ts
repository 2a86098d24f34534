/**
 * Synthetic surveillance-style clips for tests and overfit runs: a fixed
 * textured background with a slowly drifting bright block, rendered at HR
 * and bicubically downsampled to LR, both in [0,1].
 */

import { Clip } from "./train";
import { downsample4x } from "./resample";
import { Rng, Tensor } from "./tensor";

export interface SyntheticOptions {
    lrWidth: number;
    lrHeight: number;
    frames: number;
    keyInterval: number;
    seed: number;
    driftEvery?: number; // move the block every N frames
    panPerFrame?: number; // global scene pan in HR pixels per frame
    detailAmp?: number; // amplitude of the cell-sign detail field (pan 4 keeps it LR-invisible)
}

function backgroundAt(comps: Array<[number, number, number, number]>, waves: number, y: number, x: number): number {
    let v = 0.5;
    for (const [fy, fx, ph, amp] of comps) {
        v += (amp / waves) * Math.sin(fy * y + fx * x + ph);
    }
    return Math.min(1, Math.max(0, v));
}

export function syntheticClip(opts: SyntheticOptions): Clip {
    const rng = new Rng(opts.seed);
    const hw = opts.lrWidth * 4;
    const hh = opts.lrHeight * 4;
    // sum of random sinusoids: smooth but rich in mid frequencies, so 4x
    // downsampling genuinely destroys detail; evaluated analytically so the
    // scene can pan by any amount without wrap seams
    const waves = 8;
    const comps: Array<[number, number, number, number]> = [];
    for (let k = 0; k < waves; k++) {
        comps.push([rng.uniform(0.2, 1.8), rng.uniform(0.2, 1.8), rng.uniform(0, 2 * Math.PI), rng.uniform(0.4, 1)]);
    }
    const block = Math.max(4, Math.floor(hh / 6));
    const driftEvery = opts.driftEvery ?? 2;
    const pan = opts.panPerFrame ?? 0;
    const detailAmp = opts.detailAmp ?? 0;
    let by = Math.floor(hh / 4);
    let bx = Math.floor(hw / 4);

    // world-anchored detail: one random sign per 4x4 scene cell times a
    // column alternation. The alternation cancels exactly under the 4-tap
    // bicubic downsample, so LR carries none of it; key frames are the
    // only source. The field pans with the scene, so content entering
    // after a key frame is unrecoverable - reconstruction quality decays
    // with distance from the key.
    const cellSpan = Math.ceil((Math.abs(pan) * opts.frames) / 4);
    const ch = (hh >> 2) + cellSpan + 1, cw = (hw >> 2) + cellSpan + 1;
    const signs = new Float64Array(ch * cw);
    if (detailAmp > 0) {
        for (let i = 0; i < signs.length; i++) signs[i] = rng.next() < 0.5 ? -1 : 1;
    }

    const hrFrames: Tensor[] = [];
    const lrFrames: Tensor[] = [];
    for (let t = 0; t < opts.frames; t++) {
        if (t > 0 && t % driftEvery === 0) {
            by = (by + rng.int(1, 4)) % (hh - block);
            bx = (bx + rng.int(1, 4)) % (hw - block);
        }
        const hr = new Float64Array(hh * hw);
        const shift = pan * t;
        for (let y = 0; y < hh; y++) {
            for (let x = 0; x < hw; x++) {
                // compress the background into [amp, 1-amp] so the added
                // alternation never clips (clipping would leak into LR)
                let v = detailAmp + (1 - 2 * detailAmp) * backgroundAt(comps, waves, y + shift, x + shift);
                if (detailAmp > 0) {
                    const cy = (y + shift) >> 2;
                    const cx = (x + shift) >> 2;
                    v += detailAmp * signs[cy * cw + cx] * (x % 2 === 0 ? 1 : -1);
                }
                hr[y * hw + x] = Math.min(1, Math.max(0, v));
            }
        }
        for (let y = 0; y < block; y++) {
            for (let x = 0; x < block; x++) {
                const checker = ((y >> 1) + (x >> 1)) % 2 === 0 ? 0.95 : 0.15;
                hr[(by + y) * hw + bx + x] = checker;
            }
        }
        hrFrames.push(new Tensor([1, hh, hw], hr));
        lrFrames.push(new Tensor([1, opts.lrHeight, opts.lrWidth], downsample4x(hr, hh, hw)));
    }
    const keyPositions: number[] = [];
    for (let p = 1; p <= opts.frames; p += opts.keyInterval) keyPositions.push(p);
    return { frames: lrFrames, hrFrames, keyPositions };
}
