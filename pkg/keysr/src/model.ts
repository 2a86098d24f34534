/**
 * Key-frame-assisted video super-resolution, desk scale.
 *
 * Per LR frame: shared 5-block residual extractor; HR key frames drop to
 * LR size through two stride-2 convs + LeakyReLU and the same extractor.
 * Four alternating recurrent layers (backward, forward, backward, forward)
 * refine features: at each frame the previous layer's map, the neighbour
 * frame's map from the same layer, and the assigned key frame's map are
 * aligned by one modulated deformable 3x3 convolution whose offsets are
 * flow plus a learned clamped residual, one offset group per source, then
 * fused and refined by residual blocks. A positionwise softmax over the
 * four layer outputs (scored by similarity with the first-stage feature)
 * filters the stack; two x2 pixel-shuffle stages plus a bicubic skip
 * produce the HR frame. Values are scaled to [0,1] internally.
 */

import { blockMatchFlow, TinyFlowNet } from "./flow";
import {
    add,
    bilinearWarp,
    clamp,
    concatC,
    conv2d,
    deformConv,
    dotC,
    leakyRelu,
    pixelShuffle,
    sigmoid,
    sliceC,
    softmaxStack,
    weightedSumC,
} from "./ops";
import { upsample4x } from "./resample";
import { initConvWeight, Rng, tape, Tensor } from "./tensor";

export type FlowBackend = "block" | "tiny";
export type KeyMode = "direct" | "at-key-only" | "none";

export interface ModelConfig {
    channels: number; // feature channels C (>= 4)
    inChannels: number; // frame channels (1 or 3)
    extractBlocks: number; // residual blocks in the shared extractor
    layerBlocks: number; // residual blocks per propagation layer
    upsampleMid: number; // channels between the pixel-shuffle stages
    flowBackend: FlowBackend;
    keyMode: KeyMode;
    offsetClamp: number;
    seed: number;
}

export const defaultConfig: ModelConfig = {
    channels: 8,
    inChannels: 1,
    extractBlocks: 5,
    layerBlocks: 3,
    upsampleMid: 4,
    flowBackend: "block",
    keyMode: "direct",
    offsetClamp: 10,
    seed: 1,
};

export const LAYER_DIRECTIONS: Array<"backward" | "forward"> = ["backward", "forward", "backward", "forward"];

class ParamSet {
    map = new Map<string, Tensor>();

    register(name: string, t: Tensor): Tensor {
        if (this.map.has(name)) throw new Error(`duplicate parameter ${name}`);
        t.requiresGrad = true;
        this.map.set(name, t);
        return t;
    }
}

class ResBlock {
    w1: Tensor; b1: Tensor; w2: Tensor; b2: Tensor;

    constructor(ps: ParamSet, prefix: string, rng: Rng, c: number) {
        this.w1 = ps.register(`${prefix}.w1`, initConvWeight(rng, c, c, 3, 3));
        this.b1 = ps.register(`${prefix}.b1`, new Tensor([c]));
        this.w2 = ps.register(`${prefix}.w2`, initConvWeight(rng, c, c, 3, 3));
        this.b2 = ps.register(`${prefix}.b2`, new Tensor([c]));
    }

    forward(x: Tensor): Tensor {
        return add(x, conv2d(leakyRelu(conv2d(x, this.w1, this.b1)), this.w2, this.b2));
    }
}

class Extractor {
    wIn: Tensor; bIn: Tensor; blocks: ResBlock[];

    constructor(ps: ParamSet, rng: Rng, cfg: ModelConfig) {
        this.wIn = ps.register("extract.wIn", initConvWeight(rng, cfg.channels, cfg.inChannels, 3, 3));
        this.bIn = ps.register("extract.bIn", new Tensor([cfg.channels]));
        this.blocks = [];
        for (let i = 0; i < cfg.extractBlocks; i++) {
            this.blocks.push(new ResBlock(ps, `extract.block${i}`, rng, cfg.channels));
        }
    }

    /** The residual trunk alone, for inputs already at C channels. */
    refine(features: Tensor): Tensor {
        let f = features;
        for (const b of this.blocks) f = b.forward(f);
        return f;
    }

    forward(frame: Tensor): Tensor {
        return this.refine(leakyRelu(conv2d(frame, this.wIn, this.bIn)));
    }
}

class KeyEncoder {
    w1: Tensor; b1: Tensor; w2: Tensor; b2: Tensor;

    constructor(ps: ParamSet, rng: Rng, cfg: ModelConfig) {
        this.w1 = ps.register("keyenc.w1", initConvWeight(rng, cfg.channels, cfg.inChannels, 3, 3));
        this.b1 = ps.register("keyenc.b1", new Tensor([cfg.channels]));
        this.w2 = ps.register("keyenc.w2", initConvWeight(rng, cfg.channels, cfg.channels, 3, 3));
        this.b2 = ps.register("keyenc.b2", new Tensor([cfg.channels]));
    }

    /** HR frame [cin, 4h, 4w] -> [C, h, w], stride-2 convs + LeakyReLU twice. */
    forward(hrFrame: Tensor): Tensor {
        const a = leakyRelu(conv2d(hrFrame, this.w1, this.b1, 2, 1));
        return leakyRelu(conv2d(a, this.w2, this.b2, 2, 1));
    }
}

class PropLayer {
    offW1: Tensor; offB1: Tensor; offW2: Tensor; offB2: Tensor;
    dcnW: Tensor; dcnB: Tensor;
    fuseW: Tensor; fuseB: Tensor;
    blocks: ResBlock[];

    constructor(ps: ParamSet, prefix: string, rng: Rng, cfg: ModelConfig) {
        const c = cfg.channels;
        this.offW1 = ps.register(`${prefix}.offW1`, initConvWeight(rng, c, 3 * c + 4, 3, 3));
        this.offB1 = ps.register(`${prefix}.offB1`, new Tensor([c]));
        this.offW2 = ps.register(`${prefix}.offW2`, initConvWeight(rng, 54, c, 3, 3, 0.1));
        this.offB2 = ps.register(`${prefix}.offB2`, new Tensor([54]));
        // center-tap pass-through on both sources so feature continuity
        // (neighbour and key branches) exists at init instead of having to
        // be discovered; masks start at sigmoid(0) = 0.5
        this.dcnW = ps.register(`${prefix}.dcnW`, initConvWeight(rng, c, 2 * c, 3, 3, 0.25));
        for (let co = 0; co < c; co++) {
            this.dcnW.data[((co * 2 * c + co) * 3 + 1) * 3 + 1] += 1.0;
            this.dcnW.data[((co * 2 * c + c + co) * 3 + 1) * 3 + 1] += 1.0;
        }
        this.dcnB = ps.register(`${prefix}.dcnB`, new Tensor([c]));
        this.fuseW = ps.register(`${prefix}.fuseW`, initConvWeight(rng, c, 2 * c, 3, 3, 0.25));
        for (let co = 0; co < c; co++) {
            this.fuseW.data[((co * 2 * c + co) * 3 + 1) * 3 + 1] += 0.5;
            this.fuseW.data[((co * 2 * c + c + co) * 3 + 1) * 3 + 1] += 0.5;
        }
        this.fuseB = ps.register(`${prefix}.fuseB`, new Tensor([c]));
        this.blocks = [];
        for (let i = 0; i < cfg.layerBlocks; i++) {
            this.blocks.push(new ResBlock(ps, `${prefix}.block${i}`, rng, cfg.channels));
        }
    }
}

/** Broadcast per-source flows onto the 9 taps and add the clamped residuals. */
function flowGuidedOffsets(residual: Tensor, flowPrev: Tensor, flowKey: Tensor): Tensor {
    const [, h, w] = residual.shape;
    const plane = h * w;
    const out = new Tensor([36, h, w]);
    const flows = [flowPrev, flowKey];
    for (let g = 0; g < 2; g++) {
        const fd = flows[g].data;
        for (let k = 0; k < 9; k++) {
            for (let comp = 0; comp < 2; comp++) {
                const ch = (g * 9 + k) * 2 + comp;
                const rBase = ch * plane;
                const fBase = comp * plane;
                for (let p = 0; p < plane; p++) out.data[rBase + p] = residual.data[rBase + p] + fd[fBase + p];
            }
        }
    }
    const t = tape();
    if (t) {
        t.push(() => {
            const go = out.grad;
            if (!go) return;
            const gr = residual.ensureGrad();
            for (let i = 0; i < go.length; i++) gr[i] += go[i];
            for (let g = 0; g < 2; g++) {
                const gf = flows[g].ensureGrad();
                for (let k = 0; k < 9; k++) {
                    for (let comp = 0; comp < 2; comp++) {
                        const rBase = ((g * 9 + k) * 2 + comp) * plane;
                        const fBase = comp * plane;
                        for (let p = 0; p < plane; p++) gf[fBase + p] += go[rBase + p];
                    }
                }
            }
        });
    }
    return out;
}

export interface ForwardInput {
    frames: Tensor[]; // LR frames [cin, h, w], values in [0,1]
    keyFrames: Tensor[]; // HR key frames [cin, 4h, 4w], values in [0,1]
    keyPositions: number[]; // 1-based positions of key frames within `frames`
}

export class Model {
    cfg: ModelConfig;
    ps = new ParamSet();
    extractor: Extractor;
    keyEncoder: KeyEncoder;
    layers: PropLayer[];
    upA: Tensor; upAb: Tensor; upB: Tensor; upBb: Tensor; upC: Tensor; upCb: Tensor;
    flowNet: TinyFlowNet | null = null;

    constructor(cfg: ModelConfig) {
        if (cfg.channels < 4) throw new Error("channels must be >= 4");
        this.cfg = cfg;
        const rng = new Rng(cfg.seed);
        this.extractor = new Extractor(this.ps, rng, cfg);
        this.keyEncoder = new KeyEncoder(this.ps, rng, cfg);
        this.layers = LAYER_DIRECTIONS.map((_, l) => new PropLayer(this.ps, `layer${l}`, rng, cfg));
        const mid = cfg.upsampleMid;
        this.upA = this.ps.register("up.wA", initConvWeight(rng, 4 * mid, cfg.channels, 3, 3));
        this.upAb = this.ps.register("up.bA", new Tensor([4 * mid]));
        this.upB = this.ps.register("up.wB", initConvWeight(rng, 4 * mid, mid, 3, 3));
        this.upBb = this.ps.register("up.bB", new Tensor([4 * mid]));
        this.upC = this.ps.register("up.wC", initConvWeight(rng, cfg.inChannels, mid, 3, 3));
        this.upCb = this.ps.register("up.bC", new Tensor([cfg.inChannels]));
        if (cfg.flowBackend === "tiny") {
            this.flowNet = new TinyFlowNet(rng);
            this.flowNet.params().forEach((t, i) => this.ps.register(`flow.p${i}`, t));
        }
    }

    params(): Map<string, Tensor> {
        return this.ps.map;
    }

    zeroGrads(): void {
        for (const t of this.ps.map.values()) t.zeroGrad();
    }

    /** Nearest key by position, ties to the earlier key; -1 without keys. */
    assignKey(pos: number, keyPositions: number[]): number {
        let best = -1;
        let bestDist = Infinity;
        keyPositions.forEach((kp, i) => {
            const d = Math.abs(kp - pos);
            if (d < bestDist) {
                bestDist = d;
                best = i;
            }
        });
        return best;
    }

    /** flow on frame a's grid aligning frame b onto it (luma channel). */
    estimateFlow(a: Tensor, b: Tensor): Tensor {
        const [, h, w] = a.shape;
        if (this.cfg.flowBackend === "tiny" && this.flowNet) {
            return this.flowNet.forward(sliceC(a, 0, 1), sliceC(b, 0, 1));
        }
        const plane = h * w;
        return blockMatchFlow(a.data.subarray(0, plane) as Float64Array, b.data.subarray(0, plane) as Float64Array, h, w);
    }

    extractFeatures(frame: Tensor): Tensor {
        return this.extractor.forward(frame);
    }

    encodeKeyFrame(hrFrame: Tensor): Tensor {
        const [, hh, ww] = hrFrame.shape;
        if (hh % 4 || ww % 4) throw new Error(`key frame ${ww}x${hh} not divisible by 4`);
        return this.extractor.refine(this.keyEncoder.forward(hrFrame));
    }

    alignAndFuse(
        layer: PropLayer,
        curPrevLayer: Tensor,
        prevFeat: Tensor,
        keyFeat: Tensor,
        flowPrev: Tensor,
        flowKey: Tensor,
    ): Tensor {
        const warpedPrev = bilinearWarp(prevFeat, flowPrev);
        const warpedKey = bilinearWarp(keyFeat, flowKey);
        const offIn = concatC([curPrevLayer, warpedPrev, warpedKey, flowPrev, flowKey]);
        const hidden = leakyRelu(conv2d(offIn, layer.offW1, layer.offB1));
        const raw = conv2d(hidden, layer.offW2, layer.offB2);
        const residual = clamp(sliceC(raw, 0, 36), -this.cfg.offsetClamp, this.cfg.offsetClamp);
        const offsets = flowGuidedOffsets(residual, flowPrev, flowKey);
        const masks = sigmoid(sliceC(raw, 36, 54));
        const aligned = deformConv(concatC([prevFeat, keyFeat]), offsets, masks, layer.dcnW, layer.dcnB, 2);
        let fused = leakyRelu(conv2d(concatC([aligned, curPrevLayer]), layer.fuseW, layer.fuseB));
        for (const b of layer.blocks) fused = b.forward(fused);
        return fused;
    }

    /**
     * Full reconstruction pass. Returns HR frames [cin, 4h, 4w] in [0,1]
     * plus the per-layer feature maps (for probes and tests).
     */
    forward(input: ForwardInput): { hr: Tensor[]; layerFeats: Tensor[][]; base: Tensor[] } {
        const { frames, keyFrames, keyPositions } = input;
        const t = frames.length;
        const [cin, h, w] = frames[0].shape;
        if (keyFrames.length !== keyPositions.length) throw new Error("key frames and positions differ in length");
        const c = this.cfg.channels;

        const base = frames.map((f) => this.extractFeatures(f));
        const useKeys = this.cfg.keyMode !== "none" && keyFrames.length > 0;
        const keyFeats = useKeys ? keyFrames.map((kf) => this.encodeKeyFrame(kf)) : [];
        const zeroFeat = Tensor.zeros([c, h, w]);
        const zeroFlow = Tensor.zeros([2, h, w]);

        // per-frame key assignment and key-alignment flows
        const assigned: number[] = [];
        const keyFlows: Tensor[] = [];
        for (let i = 0; i < t; i++) {
            const pos = i + 1;
            let j = useKeys ? this.assignKey(pos, keyPositions) : -1;
            if (this.cfg.keyMode === "at-key-only" && j >= 0 && keyPositions[j] !== pos) j = -1;
            assigned.push(j);
            if (j < 0) {
                keyFlows.push(zeroFlow);
            } else if (keyPositions[j] === pos) {
                keyFlows.push(zeroFlow);
            } else {
                keyFlows.push(this.estimateFlow(frames[i], frames[keyPositions[j] - 1]));
            }
        }

        // neighbour flows per direction
        const flowToPrev: Array<Tensor | null> = frames.map((_, i) =>
            i > 0 ? this.estimateFlow(frames[i], frames[i - 1]) : null,
        );
        const flowToNext: Array<Tensor | null> = frames.map((_, i) =>
            i < t - 1 ? this.estimateFlow(frames[i], frames[i + 1]) : null,
        );

        const layerFeats: Tensor[][] = [];
        let prevLayer = base;
        for (let l = 0; l < this.layers.length; l++) {
            const layer = this.layers[l];
            const forward = LAYER_DIRECTIONS[l] === "forward";
            const out: Tensor[] = new Array(t);
            const order = [...Array(t).keys()];
            if (!forward) order.reverse();
            let carried: Tensor | null = null;
            for (const i of order) {
                const flowN = forward ? flowToPrev[i] : flowToNext[i];
                const prevFeat = carried ?? zeroFeat;
                const flowPrev = carried && flowN ? flowN : zeroFlow;
                const j = assigned[i];
                const keyFeat = j >= 0 ? keyFeats[j] : zeroFeat;
                out[i] = this.alignAndFuse(layer, prevLayer[i], prevFeat, keyFeat, flowPrev, keyFlows[i]);
                carried = out[i];
            }
            layerFeats.push(out);
            prevLayer = out;
        }

        const hr: Tensor[] = [];
        for (let i = 0; i < t; i++) {
            const filtered = this.attentionFilter(
                layerFeats.map((lf) => lf[i]),
                base[i],
            );
            hr.push(this.upsampleHead(filtered, frames[i]));
        }
        return { hr, layerFeats, base };
    }

    /** Softmax-weighted blend of the layer maps, scored against the first-stage feature. */
    attentionFilter(feats: Tensor[], reference: Tensor): Tensor {
        const scores = feats.map((f) => dotC(f, reference));
        const weights = softmaxStack(scores);
        return weightedSumC(weights, feats);
    }

    /** Two x2 pixel-shuffle stages plus the bicubic residual skip. */
    upsampleHead(feat: Tensor, lrFrame: Tensor): Tensor {
        const [cin, h, w] = lrFrame.shape;
        const a = leakyRelu(pixelShuffle(conv2d(feat, this.upA, this.upAb), 2));
        const b = leakyRelu(pixelShuffle(conv2d(a, this.upB, this.upBb), 2));
        const refined = conv2d(b, this.upC, this.upCb);
        const skip = new Tensor([cin, h * 4, w * 4]);
        for (let ci = 0; ci < cin; ci++) {
            const plane = lrFrame.data.subarray(ci * h * w, (ci + 1) * h * w) as Float64Array;
            skip.data.set(upsample4x(plane, h, w), ci * h * w * 16);
        }
        return add(refined, skip);
    }
}
