/**
 * Exchange-directory I/O shared with the transmission pipeline:
 * raw planar video files with a `width=/height=/fps=/frames=` sidecar
 * header, key_%06d.png images, and indices.txt (two comma-separated
 * lines: key frame indices, then redundant frame indices, 1-based).
 *
 * Gray files carry one plane per frame; 3-channel files are 4:2:0 with
 * quarter-size chroma planes (replicated 2x2 on read).
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { decodePng, Image } from "./png";

export interface RawVideo {
    width: number;
    height: number;
    channels: number;
    fps: string; // kept verbatim, e.g. "10/1"
    frames: Float64Array[][]; // frames[t][channel] -> plane h*w
}

export function readSidecar(rawPath: string): { width: number; height: number; fps: string; frames: number } {
    const sidecar = rawPath + ".hdr";
    if (!fs.existsSync(sidecar)) throw new Error(`missing sidecar header ${sidecar}`);
    const fields = new Map<string, string>();
    for (const line of fs.readFileSync(sidecar, "utf8").split("\n")) {
        const eq = line.indexOf("=");
        if (eq > 0) fields.set(line.slice(0, eq).trim(), line.slice(eq + 1).trim());
    }
    for (const key of ["width", "height", "fps", "frames"]) {
        if (!fields.has(key)) throw new Error(`sidecar ${sidecar} missing '${key}=' line`);
    }
    return {
        width: parseInt(fields.get("width")!, 10),
        height: parseInt(fields.get("height")!, 10),
        fps: fields.get("fps")!,
        frames: parseInt(fields.get("frames")!, 10),
    };
}

export function readRaw(rawPath: string): RawVideo {
    const meta = readSidecar(rawPath);
    const { width: w, height: h, frames: t } = meta;
    const buf = fs.readFileSync(rawPath);
    const graySize = w * h;
    const yuvSize = graySize + 2 * (w >> 1) * (h >> 1);
    let channels: number;
    let per: number;
    if (buf.length === t * graySize) {
        channels = 1;
        per = graySize;
    } else if (w % 2 === 0 && h % 2 === 0 && buf.length === t * yuvSize) {
        channels = 3;
        per = yuvSize;
    } else {
        throw new Error(`raw stream size ${buf.length} is not ${t} frames of ${w}x${h}`);
    }
    const frames: Float64Array[][] = [];
    const cw = w >> 1, ch = h >> 1;
    for (let i = 0; i < t; i++) {
        const base = i * per;
        const planes: Float64Array[] = [];
        const y = new Float64Array(graySize);
        for (let p = 0; p < graySize; p++) y[p] = buf[base + p];
        planes.push(y);
        if (channels === 3) {
            for (let c = 0; c < 2; c++) {
                const sub = base + graySize + c * cw * ch;
                const plane = new Float64Array(graySize);
                for (let yy = 0; yy < h; yy++) {
                    for (let xx = 0; xx < w; xx++) {
                        plane[yy * w + xx] = buf[sub + (yy >> 1) * cw + (xx >> 1)];
                    }
                }
                planes.push(plane);
            }
        }
        frames.push(planes);
    }
    return { width: w, height: h, channels, fps: meta.fps, frames };
}

export function writeRaw(video: RawVideo, rawPath: string): void {
    const { width: w, height: h, channels } = video;
    const graySize = w * h;
    const cw = w >> 1, ch = h >> 1;
    const per = channels === 1 ? graySize : graySize + 2 * cw * ch;
    const buf = Buffer.alloc(per * video.frames.length);
    video.frames.forEach((planes, i) => {
        const base = i * per;
        const y = planes[0];
        for (let p = 0; p < graySize; p++) {
            const v = y[p] >= 0 ? Math.floor(y[p] + 0.5) : Math.ceil(y[p] - 0.5);
            buf[base + p] = Math.min(255, Math.max(0, v));
        }
        if (channels === 3) {
            for (let c = 0; c < 2; c++) {
                const sub = base + graySize + c * cw * ch;
                const plane = planes[c + 1];
                for (let yy = 0; yy < ch; yy++) {
                    for (let xx = 0; xx < cw; xx++) {
                        const v = plane[(yy * 2) * w + xx * 2];
                        const q = v >= 0 ? Math.floor(v + 0.5) : Math.ceil(v - 0.5);
                        buf[sub + yy * cw + xx] = Math.min(255, Math.max(0, q));
                    }
                }
            }
        }
    });
    fs.writeFileSync(rawPath, buf);
    fs.writeFileSync(
        rawPath + ".hdr",
        `width=${w}\nheight=${h}\nfps=${video.fps}\nframes=${video.frames.length}\n`,
    );
}

export function readIndices(file: string): { keys: number[]; redundant: number[] } {
    const lines = fs.readFileSync(file, "utf8").split("\n");
    const parse = (line: string | undefined) =>
        (line ?? "")
            .split(",")
            .map((s) => s.trim())
            .filter((s) => s.length > 0)
            .map((s) => parseInt(s, 10));
    return { keys: parse(lines[0]), redundant: parse(lines[1]) };
}

export function imageToPlanes(img: Image): Float64Array[] {
    const { width: w, height: h, channels, data } = img;
    const planes: Float64Array[] = [];
    for (let c = 0; c < channels; c++) {
        const plane = new Float64Array(w * h);
        for (let p = 0; p < w * h; p++) plane[p] = data[p * channels + c];
        planes.push(plane);
    }
    return planes;
}

export interface Workdir {
    lr: RawVideo;
    keyImages: Float64Array[][]; // per key frame: planes at HR size
    keys: number[]; // 1-based original indices
    redundant: number[];
}

export function readWorkdir(dir: string): Workdir {
    const lr = readRaw(path.join(dir, "lr.raw"));
    const { keys, redundant } = readIndices(path.join(dir, "indices.txt"));
    const keyImages: Float64Array[][] = [];
    for (let n = 1; n <= keys.length; n++) {
        const name = path.join(dir, `key_${String(n).padStart(6, "0")}.png`);
        const img = decodePng(fs.readFileSync(name));
        if (img.width !== lr.width * 4 || img.height !== lr.height * 4) {
            throw new Error(`key image ${name} is ${img.width}x${img.height}, expected ${lr.width * 4}x${lr.height * 4}`);
        }
        keyImages.push(imageToPlanes(img));
    }
    return { lr, keyImages, keys, redundant };
}
