/**
 * Minimal PNG reader/writer: 8-bit depth, gray (color type 0), RGB (2) and
 * RGBA (6, alpha dropped on read), no interlacing. Enough to exchange key
 * frame images with the transmission pipeline.
 */

import * as zlib from "node:zlib";

const SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

const CRC_TABLE = (() => {
    const table = new Uint32Array(256);
    for (let n = 0; n < 256; n++) {
        let c = n;
        for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
        table[n] = c >>> 0;
    }
    return table;
})();

function crc32(buf: Buffer): number {
    let c = 0xffffffff;
    for (let i = 0; i < buf.length; i++) c = CRC_TABLE[(c ^ buf[i]) & 0xff] ^ (c >>> 8);
    return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, body: Buffer): Buffer {
    const head = Buffer.alloc(8);
    head.writeUInt32BE(body.length, 0);
    head.write(type, 4, "ascii");
    const crcBuf = Buffer.alloc(4);
    crcBuf.writeUInt32BE(crc32(Buffer.concat([head.subarray(4), body])), 0);
    return Buffer.concat([head, body, crcBuf]);
}

export interface Image {
    width: number;
    height: number;
    channels: number; // 1 or 3
    data: Uint8Array; // interleaved row-major
}

export function encodePng(img: Image): Buffer {
    const { width, height, channels, data } = img;
    if (channels !== 1 && channels !== 3) throw new Error(`unsupported channel count ${channels}`);
    if (data.length !== width * height * channels) throw new Error("image data size mismatch");
    const ihdr = Buffer.alloc(13);
    ihdr.writeUInt32BE(width, 0);
    ihdr.writeUInt32BE(height, 4);
    ihdr.writeUInt8(8, 8); // bit depth
    ihdr.writeUInt8(channels === 1 ? 0 : 2, 9); // color type
    const stride = width * channels;
    const raw = Buffer.alloc((stride + 1) * height);
    for (let y = 0; y < height; y++) {
        raw[y * (stride + 1)] = 0; // filter: none
        raw.set(data.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
    }
    const idat = zlib.deflateSync(raw);
    return Buffer.concat([SIGNATURE, chunk("IHDR", ihdr), chunk("IDAT", idat), chunk("IEND", Buffer.alloc(0))]);
}

function paeth(a: number, b: number, c: number): number {
    const p = a + b - c;
    const pa = Math.abs(p - a), pb = Math.abs(p - b), pc = Math.abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

export function decodePng(buf: Buffer): Image {
    if (!buf.subarray(0, 8).equals(SIGNATURE)) throw new Error("not a PNG file");
    let pos = 8;
    let width = 0, height = 0, colorType = 0, bitDepth = 0;
    const idat: Buffer[] = [];
    while (pos < buf.length) {
        const len = buf.readUInt32BE(pos);
        const type = buf.toString("ascii", pos + 4, pos + 8);
        const body = buf.subarray(pos + 8, pos + 8 + len);
        if (type === "IHDR") {
            width = body.readUInt32BE(0);
            height = body.readUInt32BE(4);
            bitDepth = body.readUInt8(8);
            colorType = body.readUInt8(9);
            if (bitDepth !== 8) throw new Error(`unsupported bit depth ${bitDepth}`);
            if (![0, 2, 6].includes(colorType)) throw new Error(`unsupported color type ${colorType}`);
            if (body.readUInt8(12) !== 0) throw new Error("interlaced PNG not supported");
        } else if (type === "IDAT") {
            idat.push(body);
        } else if (type === "IEND") {
            break;
        }
        pos += 12 + len;
    }
    const srcCh = colorType === 0 ? 1 : colorType === 2 ? 3 : 4;
    const raw = zlib.inflateSync(Buffer.concat(idat));
    const stride = width * srcCh;
    if (raw.length !== (stride + 1) * height) throw new Error("PNG scanline data size mismatch");
    const lines = Buffer.alloc(stride * height);
    let prevRow = Buffer.alloc(stride);
    for (let y = 0; y < height; y++) {
        const filter = raw[y * (stride + 1)];
        const row = Buffer.from(raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1)));
        for (let i = 0; i < stride; i++) {
            const left = i >= srcCh ? row[i - srcCh] : 0;
            const up = prevRow[i];
            const ul = i >= srcCh ? prevRow[i - srcCh] : 0;
            switch (filter) {
                case 0: break;
                case 1: row[i] = (row[i] + left) & 0xff; break;
                case 2: row[i] = (row[i] + up) & 0xff; break;
                case 3: row[i] = (row[i] + ((left + up) >> 1)) & 0xff; break;
                case 4: row[i] = (row[i] + paeth(left, up, ul)) & 0xff; break;
                default: throw new Error(`unknown PNG filter ${filter}`);
            }
        }
        row.copy(lines, y * stride);
        prevRow = row;
    }
    const channels = srcCh === 1 ? 1 : 3;
    const data = new Uint8Array(width * height * channels);
    if (srcCh === channels) {
        data.set(lines.subarray(0, data.length));
    } else {
        for (let p = 0; p < width * height; p++) {
            data[p * 3] = lines[p * 4];
            data[p * 3 + 1] = lines[p * 4 + 1];
            data[p * 3 + 2] = lines[p * 4 + 2];
        }
    }
    return { width, height, channels, data };
}
