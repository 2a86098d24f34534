import assert from "node:assert/strict";
import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { test } from "node:test";

import { reconstructWorkdir, trainCommand } from "../src/cli";
import { encodePng } from "../src/png";
import { readRaw, writeRaw, RawVideo } from "../src/rawio";
import { quantizeU8 } from "../src/resample";
import { syntheticClip } from "../src/synthetic";
import { Tensor } from "../src/tensor";

function tmpdir(): string {
    return fs.mkdtempSync(path.join(os.tmpdir(), "keysr-cli-"));
}

function tensorToU8Plane(t: Tensor): Uint8Array {
    const scaled = new Float64Array(t.size);
    for (let i = 0; i < t.size; i++) scaled[i] = t.data[i] * 255;
    return quantizeU8(scaled);
}

/** Materialize the exchange-directory contract from a synthetic clip. */
function buildWorkdir(dir: string, lrW: number, lrH: number, frames: number, keyEvery: number, redundant: number[]) {
    const clip = syntheticClip({ lrWidth: lrW, lrHeight: lrH, frames, keyInterval: keyEvery, seed: 4 });
    const surviving = [...Array(frames).keys()].map((i) => i + 1).filter((p) => !redundant.includes(p));
    const video: RawVideo = {
        width: lrW,
        height: lrH,
        channels: 1,
        fps: "10/1",
        frames: surviving.map((p) => {
            const t = clip.frames[p - 1];
            const plane = new Float64Array(t.size);
            for (let i = 0; i < t.size; i++) plane[i] = t.data[i] * 255;
            return [plane];
        }),
    };
    writeRaw(video, path.join(dir, "lr.raw"));
    const keys = clip.keyPositions.filter((p) => !redundant.includes(p));
    keys.forEach((p, n) => {
        const img = encodePng({
            width: lrW * 4,
            height: lrH * 4,
            channels: 1,
            data: tensorToU8Plane(clip.hrFrames[p - 1]),
        });
        fs.writeFileSync(path.join(dir, `key_${String(n + 1).padStart(6, "0")}.png`), img);
    });
    fs.writeFileSync(
        path.join(dir, "indices.txt"),
        keys.join(",") + "\n" + redundant.join(",") + "\n",
    );
    return { clip, keys, surviving };
}

test("reconstruct command fills hr.raw with 4x frames for every surviving LR frame", () => {
    const dir = tmpdir();
    const { surviving } = buildWorkdir(dir, 12, 12, 8, 3, [4, 7]);
    reconstructWorkdir(dir);
    const hr = readRaw(path.join(dir, "hr.raw"));
    assert.equal(hr.width, 48);
    assert.equal(hr.height, 48);
    assert.equal(hr.frames.length, surviving.length);
    assert.equal(hr.fps, "10/1");
    fs.rmSync(dir, { recursive: true });
});

test("reconstruct rejects a key marked redundant", () => {
    const dir = tmpdir();
    buildWorkdir(dir, 12, 12, 6, 3, [2]);
    // corrupt indices: declare key 1 redundant
    fs.writeFileSync(path.join(dir, "indices.txt"), "1\n1,2\n");
    assert.throws(() => reconstructWorkdir(dir), /redundant/);
    fs.rmSync(dir, { recursive: true });
});

test("cli binary runs reconstruct end to end", () => {
    const dir = tmpdir();
    buildWorkdir(dir, 12, 12, 6, 3, []);
    const cli = path.join(__dirname, "..", "src", "cli.js");
    execFileSync(process.execPath, [cli, "reconstruct", dir], { stdio: "pipe" });
    assert.ok(fs.existsSync(path.join(dir, "hr.raw")));
    fs.rmSync(dir, { recursive: true });
});

test("train command overfits a tiny clip and writes a checkpoint", () => {
    const dir = tmpdir();
    // materialize an HR clip as raw for the training CLI
    const clip = syntheticClip({ lrWidth: 8, lrHeight: 8, frames: 4, keyInterval: 2, seed: 9 });
    const hrVideo: RawVideo = {
        width: 32,
        height: 32,
        channels: 1,
        fps: "10/1",
        frames: clip.hrFrames.map((t) => {
            const plane = new Float64Array(t.size);
            for (let i = 0; i < t.size; i++) plane[i] = t.data[i] * 255;
            return [plane];
        }),
    };
    writeRaw(hrVideo, path.join(dir, "clip.raw"));
    fs.writeFileSync(
        path.join(dir, "cfg.json"),
        JSON.stringify({ channels: 4, layerBlocks: 1, steps: 3, keyInterval: 2, cropSize: 8, cropFrames: 3, logEvery: 10 }),
    );
    trainCommand(path.join(dir, "cfg.json"), path.join(dir, "clip.raw"), path.join(dir, "ckpt.json"));
    assert.ok(fs.existsSync(path.join(dir, "ckpt.json")));

    // the checkpoint reloads and drives reconstruction
    const wd = tmpdir();
    buildWorkdir(wd, 8, 8, 4, 2, []);
    reconstructWorkdir(wd, path.join(dir, "ckpt.json"));
    const hr = readRaw(path.join(wd, "hr.raw"));
    assert.equal(hr.frames.length, 4);
    fs.rmSync(dir, { recursive: true });
    fs.rmSync(wd, { recursive: true });
});
