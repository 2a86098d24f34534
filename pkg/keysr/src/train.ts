/**
 * Training loop: Adam on a Charbonnier reconstruction loss over random
 * temporal/spatial crops of one or more clips. Deterministic under a
 * fixed seed (single-threaded, seeded PRNG, no reordering).
 */

import * as fs from "node:fs";

import { add as addScalars, charbonnier, scale as scaleScalar } from "./ops";
import { ForwardInput, Model, ModelConfig } from "./model";
import { Rng, Tape, Tensor, withTape } from "./tensor";

export interface Clip {
    frames: Tensor[]; // LR [cin,h,w] in [0,1]
    hrFrames: Tensor[]; // ground truth HR [cin,4h,4w] in [0,1]
    keyPositions: number[]; // 1-based into frames
}

export interface TrainOptions {
    lr?: number;
    beta1?: number;
    beta2?: number;
    eps?: number;
    cropSize?: number; // LR pixels, 0 = full frame
    cropFrames?: number; // temporal window, 0 = full clip
    seed?: number;
}

export class Adam {
    lr: number; beta1: number; beta2: number; eps: number;
    private m = new Map<string, Float64Array>();
    private v = new Map<string, Float64Array>();
    step = 0;

    constructor(opts: TrainOptions = {}) {
        this.lr = opts.lr ?? 1e-3;
        this.beta1 = opts.beta1 ?? 0.9;
        this.beta2 = opts.beta2 ?? 0.999;
        this.eps = opts.eps ?? 1e-8;
    }

    update(params: Map<string, Tensor>): void {
        this.step += 1;
        const bc1 = 1 - Math.pow(this.beta1, this.step);
        const bc2 = 1 - Math.pow(this.beta2, this.step);
        for (const [name, p] of params) {
            const g = p.grad;
            if (!g) continue;
            let m = this.m.get(name);
            let v = this.v.get(name);
            if (!m) {
                m = new Float64Array(p.size);
                v = new Float64Array(p.size);
                this.m.set(name, m);
                this.v.set(name, v!);
            }
            const vv = v!;
            for (let i = 0; i < p.size; i++) {
                m[i] = this.beta1 * m[i] + (1 - this.beta1) * g[i];
                vv[i] = this.beta2 * vv[i] + (1 - this.beta2) * g[i] * g[i];
                p.data[i] -= (this.lr * (m[i] / bc1)) / (Math.sqrt(vv[i] / bc2) + this.eps);
            }
        }
    }
}

function cropTensor(t: Tensor, y0: number, x0: number, size: number): Tensor {
    const [c, , w] = t.shape;
    const out = new Tensor([c, size, size]);
    const plane = t.shape[1] * w;
    for (let ci = 0; ci < c; ci++) {
        for (let y = 0; y < size; y++) {
            const src = ci * plane + (y0 + y) * w + x0;
            out.data.set(t.data.subarray(src, src + size), (ci * size + y) * size);
        }
    }
    return out;
}

export function sampleCrop(clip: Clip, rng: Rng, cropFrames: number, cropSize: number): { input: ForwardInput; gt: Tensor[] } {
    const t = clip.frames.length;
    const [, h, w] = clip.frames[0].shape;
    const winLen = cropFrames > 0 ? Math.min(cropFrames, t) : t;
    const start = winLen < t ? rng.int(0, t - winLen + 1) : 0;
    const size = cropSize > 0 ? Math.min(cropSize, h, w) : 0;
    const y0 = size > 0 && size < h ? rng.int(0, h - size + 1) : 0;
    const x0 = size > 0 && size < w ? rng.int(0, w - size + 1) : 0;

    const frames: Tensor[] = [];
    const gt: Tensor[] = [];
    for (let i = start; i < start + winLen; i++) {
        frames.push(size > 0 ? cropTensor(clip.frames[i], y0, x0, size) : clip.frames[i]);
        gt.push(size > 0 ? cropTensor(clip.hrFrames[i], 4 * y0, 4 * x0, 4 * size) : clip.hrFrames[i]);
    }
    const keyFrames: Tensor[] = [];
    const keyPositions: number[] = [];
    clip.keyPositions.forEach((kp, idx) => {
        if (kp >= start + 1 && kp <= start + winLen) {
            keyPositions.push(kp - start);
            keyFrames.push(size > 0 ? cropTensor(clip.hrFrames[kp - 1], 4 * y0, 4 * x0, 4 * size) : clip.hrFrames[kp - 1]);
        }
    });
    return { input: { frames, keyFrames, keyPositions }, gt };
}

export interface StepResult {
    loss: number;
}

export function trainStep(model: Model, clip: Clip, adam: Adam, rng: Rng, opts: TrainOptions): StepResult {
    const { input, gt } = sampleCrop(clip, rng, opts.cropFrames ?? 0, opts.cropSize ?? 0);
    const tape = new Tape();
    let lossValue = 0;
    withTape(tape, () => {
        const { hr } = model.forward(input);
        let total: Tensor | null = null;
        for (let i = 0; i < hr.length; i++) {
            const l = charbonnier(hr[i], gt[i]);
            total = total === null ? l : addScalars(total, l);
        }
        const loss = scaleScalar(total!, 1 / hr.length);
        lossValue = loss.data[0];
        if (!Number.isFinite(lossValue)) throw new Error(`non-finite loss at step ${adam.step + 1}`);
        model.zeroGrads();
        loss.ensureGrad()[0] = 1;
    });
    tape.backward();
    adam.update(model.params());
    return { loss: lossValue };
}

export function saveCheckpoint(path: string, model: Model): void {
    const params: Record<string, { shape: number[]; data: string }> = {};
    for (const [name, t] of model.params()) {
        params[name] = {
            shape: t.shape,
            data: Buffer.from(t.data.buffer, t.data.byteOffset, t.data.byteLength).toString("base64"),
        };
    }
    fs.writeFileSync(path, JSON.stringify({ version: 1, config: model.cfg, params }));
}

export function loadCheckpoint(path: string): Model {
    const payload = JSON.parse(fs.readFileSync(path, "utf8"));
    if (payload.version !== 1) throw new Error(`unsupported checkpoint version ${payload.version}`);
    const model = new Model(payload.config as ModelConfig);
    for (const [name, t] of model.params()) {
        const entry = payload.params[name];
        if (!entry) throw new Error(`checkpoint missing parameter ${name}`);
        const bytes = new Uint8Array(Buffer.from(entry.data, "base64")); // fresh, aligned buffer
        const arr = new Float64Array(bytes.buffer, 0, bytes.byteLength / 8);
        if (arr.length !== t.size) throw new Error(`checkpoint parameter ${name} has wrong size`);
        t.data.set(arr);
    }
    return model;
}
