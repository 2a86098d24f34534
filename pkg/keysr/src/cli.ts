#!/usr/bin/env node
/**
 * Command line entry points.
 *
 *   keysr reconstruct <workdir> [--checkpoint ckpt.json]
 *       Read lr.raw (+ sidecar), key_%06d.png and indices.txt from the
 *       exchange directory, run the reconstructor, write hr.raw. Without a
 *       checkpoint a fresh model (seeded from the config defaults) is used.
 *
 *   keysr train --config cfg.json --clip <dir-or-raw> --out ckpt.json
 *       Overfit/fine-tune on one clip: the config JSON may set any model
 *       field plus steps/lr/cropSize/cropFrames/keyInterval.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { defaultConfig, Model, ModelConfig } from "./model";
import { psnrPlanes } from "./metrics";
import { RawVideo, readRaw, readWorkdir, writeRaw } from "./rawio";
import { downsample4x } from "./resample";
import { Clip, Adam, loadCheckpoint, saveCheckpoint, trainStep } from "./train";
import { Rng, Tensor } from "./tensor";

function framesToTensors(video: RawVideo): Tensor[] {
    const { width: w, height: h, channels } = video;
    return video.frames.map((planes) => {
        const t = new Tensor([channels, h, w]);
        planes.forEach((plane, c) => {
            for (let p = 0; p < plane.length; p++) t.data[c * w * h + p] = plane[p] / 255;
        });
        return t;
    });
}

function tensorsToVideo(tensors: Tensor[], fps: string): RawVideo {
    const [c, h, w] = tensors[0].shape;
    return {
        width: w,
        height: h,
        channels: c,
        fps,
        frames: tensors.map((t) => {
            const planes: Float64Array[] = [];
            for (let ci = 0; ci < c; ci++) {
                const plane = new Float64Array(w * h);
                for (let p = 0; p < w * h; p++) plane[p] = t.data[ci * w * h + p] * 255;
                planes.push(plane);
            }
            return planes;
        }),
    };
}

export function reconstructWorkdir(dir: string, checkpoint?: string): void {
    const wd = readWorkdir(dir);
    const model = checkpoint
        ? loadCheckpoint(checkpoint)
        : new Model({ ...defaultConfig, inChannels: wd.lr.channels });
    if (model.cfg.inChannels !== wd.lr.channels) {
        throw new Error(`model expects ${model.cfg.inChannels} channel(s), clip has ${wd.lr.channels}`);
    }
    // original key index -> position within the surviving LR sequence
    const total = wd.lr.frames.length + wd.redundant.length;
    const dropped = new Set(wd.redundant);
    const survivors: number[] = [];
    for (let t = 1; t <= total; t++) if (!dropped.has(t)) survivors.push(t);
    const posOf = new Map(survivors.map((orig, i) => [orig, i + 1]));
    const keyPositions: number[] = [];
    for (const orig of wd.keys) {
        const pos = posOf.get(orig);
        if (pos === undefined) throw new Error(`key frame ${orig} is marked redundant`);
        keyPositions.push(pos);
    }

    const frames = framesToTensors(wd.lr);
    const [_, h, w] = frames[0].shape;
    const keyFrames = wd.keyImages.map((planes) => {
        const t = new Tensor([wd.lr.channels, h * 4, w * 4]);
        planes.slice(0, wd.lr.channels).forEach((plane, c) => {
            for (let p = 0; p < plane.length; p++) t.data[c * plane.length + p] = plane[p] / 255;
        });
        return t;
    });
    const { hr } = model.forward({ frames, keyFrames, keyPositions });
    writeRaw(tensorsToVideo(hr, wd.lr.fps), path.join(dir, "hr.raw"));
}

interface TrainFileConfig extends Partial<ModelConfig> {
    steps?: number;
    lr?: number;
    cropSize?: number;
    cropFrames?: number;
    keyInterval?: number;
    logEvery?: number;
}

export function clipFromRaw(lrVideo: RawVideo, hrVideo: RawVideo, keyInterval: number): Clip {
    const frames = framesToTensors(lrVideo);
    const hrFrames = framesToTensors(hrVideo);
    const keyPositions: number[] = [];
    for (let p = 1; p <= frames.length; p += keyInterval) keyPositions.push(p);
    return { frames, hrFrames, keyPositions };
}

export function trainCommand(configPath: string, clipPath: string, outPath: string): void {
    const fileCfg: TrainFileConfig = JSON.parse(fs.readFileSync(configPath, "utf8"));
    const hrVideo = readRaw(clipPath);
    const lrPlanes: RawVideo = {
        ...hrVideo,
        width: hrVideo.width / 4,
        height: hrVideo.height / 4,
        frames: hrVideo.frames.map((planes) => planes.map((p) => downsample4x(p, hrVideo.height, hrVideo.width))),
    };
    const clip = clipFromRaw(lrPlanes, hrVideo, fileCfg.keyInterval ?? 15);
    const cfg: ModelConfig = { ...defaultConfig, inChannels: hrVideo.channels, ...fileCfg };
    const model = new Model(cfg);
    const adam = new Adam({ lr: fileCfg.lr ?? 1e-3 });
    const rng = new Rng(cfg.seed + 1000);
    const steps = fileCfg.steps ?? 200;
    const logEvery = fileCfg.logEvery ?? 25;
    for (let s = 1; s <= steps; s++) {
        const { loss } = trainStep(model, clip, adam, rng, {
            cropSize: fileCfg.cropSize ?? 24,
            cropFrames: fileCfg.cropFrames ?? 5,
        });
        if (s === 1 || s % logEvery === 0) console.log(`step ${s}/${steps} loss ${loss.toExponential(4)}`);
    }
    saveCheckpoint(outPath, model);
    const { hr } = model.forward({
        frames: clip.frames,
        keyFrames: clip.keyPositions.map((p) => clip.hrFrames[p - 1]),
        keyPositions: clip.keyPositions,
    });
    let mean = 0;
    for (let i = 0; i < hr.length; i++) mean += psnrPlanes(hr[i].data, clip.hrFrames[i].data);
    console.log(`checkpoint ${outPath}; clip PSNR ${(mean / hr.length).toFixed(2)} dB`);
}

function usage(): never {
    console.error("usage: keysr reconstruct <workdir> [--checkpoint ckpt.json]");
    console.error("       keysr train --config cfg.json --clip clip.raw --out ckpt.json");
    process.exit(2);
}

export function main(argv: string[]): number {
    const [command, ...rest] = argv;
    try {
        if (command === "reconstruct") {
            const dir = rest.find((a) => !a.startsWith("--"));
            if (!dir) usage();
            const ck = rest.indexOf("--checkpoint");
            reconstructWorkdir(dir, ck >= 0 ? rest[ck + 1] : undefined);
            return 0;
        }
        if (command === "train") {
            const get = (flag: string) => {
                const i = rest.indexOf(flag);
                if (i < 0 || i + 1 >= rest.length) usage();
                return rest[i + 1];
            };
            trainCommand(get("--config"), get("--clip"), get("--out"));
            return 0;
        }
        usage();
    } catch (err) {
        console.error(`keysr: ${err instanceof Error ? err.message : err}`);
        return 1;
    }
}

if (require.main === module) {
    process.exit(main(process.argv.slice(2)));
}
