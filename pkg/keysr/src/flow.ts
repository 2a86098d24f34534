/**
 * Motion estimation between two equal-size planes.
 *
 * estimateFlow(a, b) returns a [2,h,w] field (dy, dx) on a's grid such
 * that a(p) ~= b(p + flow(p)): warping b by the flow aligns it onto a.
 *
 * Backends: an exhaustive block-matching search (non-trainable, exact on
 * integer shifts, deterministic zero-biased tie-breaking) and a tiny
 * trainable convolutional predictor.
 */

import { conv2d, leakyRelu, scale } from "./ops";
import { initConvWeight, Rng, Tensor } from "./tensor";

export interface BlockMatchOptions {
    blockSize?: number;
    radius?: number;
}

export function blockMatchFlow(a: Float64Array, b: Float64Array, h: number, w: number, opts: BlockMatchOptions = {}): Tensor {
    const block = opts.blockSize ?? 8;
    const radius = opts.radius ?? 4;
    const flow = new Tensor([2, h, w]);
    const plane = h * w;
    // candidate offsets ordered by distance so ties keep the smallest move
    const candidates: Array<[number, number]> = [];
    for (let dy = -radius; dy <= radius; dy++) {
        for (let dx = -radius; dx <= radius; dx++) candidates.push([dy, dx]);
    }
    candidates.sort((p, q) => Math.abs(p[0]) + Math.abs(p[1]) - (Math.abs(q[0]) + Math.abs(q[1])) || p[0] - q[0] || p[1] - q[1]);

    for (let by = 0; by < h; by += block) {
        const bh = Math.min(block, h - by);
        for (let bx = 0; bx < w; bx += block) {
            const bw = Math.min(block, w - bx);
            let best = Infinity;
            let bestDy = 0;
            let bestDx = 0;
            for (const [dy, dx] of candidates) {
                let cost = 0;
                for (let y = 0; y < bh; y++) {
                    const ay = by + y;
                    const sy = Math.min(h - 1, Math.max(0, ay + dy));
                    for (let x = 0; x < bw; x++) {
                        const ax = bx + x;
                        const sx = Math.min(w - 1, Math.max(0, ax + dx));
                        const d = a[ay * w + ax] - b[sy * w + sx];
                        cost += d * d;
                    }
                    if (cost >= best) break;
                }
                if (cost < best) {
                    best = cost;
                    bestDy = dy;
                    bestDx = dx;
                }
            }
            for (let y = 0; y < bh; y++) {
                for (let x = 0; x < bw; x++) {
                    const p = (by + y) * w + bx + x;
                    flow.data[p] = bestDy;
                    flow.data[plane + p] = bestDx;
                }
            }
        }
    }
    return flow;
}

/** Tiny trainable flow predictor: three 3x3 convs over the stacked pair. */
export class TinyFlowNet {
    w1: Tensor; b1: Tensor;
    w2: Tensor; b2: Tensor;
    w3: Tensor; b3: Tensor;
    maxDisp: number;

    constructor(rng: Rng, channels = 8, maxDisp = 4) {
        this.w1 = initConvWeight(rng, channels, 2, 3, 3);
        this.b1 = new Tensor([channels], undefined, true);
        this.w2 = initConvWeight(rng, channels, channels, 3, 3);
        this.b2 = new Tensor([channels], undefined, true);
        this.w3 = initConvWeight(rng, 2, channels, 3, 3, 0.1);
        this.b3 = new Tensor([2], undefined, true);
        this.maxDisp = maxDisp;
    }

    params(): Tensor[] {
        return [this.w1, this.b1, this.w2, this.b2, this.w3, this.b3];
    }

    forward(a: Tensor, b: Tensor): Tensor {
        const [, h, w] = a.shape;
        const stacked = new Tensor([2, h, w]);
        stacked.data.set(a.data, 0);
        stacked.data.set(b.data, h * w);
        let f = leakyRelu(conv2d(stacked, this.w1, this.b1));
        f = leakyRelu(conv2d(f, this.w2, this.b2));
        return scale(conv2d(f, this.w3, this.b3), this.maxDisp / 4);
    }
}
