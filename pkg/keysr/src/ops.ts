/**
 * Differentiable operations over CHW tensors. Each op computes its output
 * eagerly and registers a backward closure on the active tape.
 *
 * Flow fields use channel 0 = dy, channel 1 = dx, in pixels of their own
 * grid; sampling clamps to the border.
 */

import { Tensor, tape } from "./tensor";

function bwd(fn: () => void): void {
    const t = tape();
    if (t) t.push(fn);
}

export function conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride = 1, pad = 1): Tensor {
    const [cin, h, w] = x.shape;
    const [cout, cinW, kh, kw] = weight.shape;
    if (cin !== cinW) throw new Error(`conv2d: ${cin} input channels vs weight ${cinW}`);
    if (stride === 1) return conv2dS1(x, weight, bias, pad);
    return conv2dStrided(x, weight, bias, stride, pad);
}

/** stride-1 convolution with row-wise accumulation (the hot path). */
function conv2dS1(x: Tensor, weight: Tensor, bias: Tensor, pad: number): Tensor {
    const [cin, h, w] = x.shape;
    const [cout, , kh, kw] = weight.shape;
    const oh = h + 2 * pad - kh + 1;
    const ow = w + 2 * pad - kw + 1;
    const out = new Tensor([cout, oh, ow]);
    const xd = x.data, wd = weight.data, bd = bias.data, od = out.data;
    const oPlane = oh * ow;
    for (let co = 0; co < cout; co++) {
        od.fill(bd[co], co * oPlane, (co + 1) * oPlane);
        for (let ci = 0; ci < cin; ci++) {
            for (let ky = 0; ky < kh; ky++) {
                const dy = ky - pad;
                const oyStart = Math.max(0, -dy);
                const oyEnd = Math.min(oh, h - dy);
                for (let kx = 0; kx < kw; kx++) {
                    const wv = wd[((co * cin + ci) * kh + ky) * kw + kx];
                    if (wv === 0) continue;
                    const dx = kx - pad;
                    const oxStart = Math.max(0, -dx);
                    const oxEnd = Math.min(ow, w - dx);
                    for (let oy = oyStart; oy < oyEnd; oy++) {
                        const rowO = co * oPlane + oy * ow;
                        const rowI = (ci * h + oy + dy) * w + dx;
                        for (let ox = oxStart; ox < oxEnd; ox++) od[rowO + ox] += wv * xd[rowI + ox];
                    }
                }
            }
        }
    }
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        const gx = x.ensureGrad(), gw = weight.ensureGrad(), gb = bias.ensureGrad();
        for (let co = 0; co < cout; co++) {
            let accB = 0;
            for (let p = co * oPlane; p < (co + 1) * oPlane; p++) accB += go[p];
            gb[co] += accB;
            for (let ci = 0; ci < cin; ci++) {
                for (let ky = 0; ky < kh; ky++) {
                    const dy = ky - pad;
                    const oyStart = Math.max(0, -dy);
                    const oyEnd = Math.min(oh, h - dy);
                    for (let kx = 0; kx < kw; kx++) {
                        const wIdx = ((co * cin + ci) * kh + ky) * kw + kx;
                        const wv = wd[wIdx];
                        const dx = kx - pad;
                        const oxStart = Math.max(0, -dx);
                        const oxEnd = Math.min(ow, w - dx);
                        let accW = 0;
                        for (let oy = oyStart; oy < oyEnd; oy++) {
                            const rowO = co * oPlane + oy * ow;
                            const rowI = (ci * h + oy + dy) * w + dx;
                            for (let ox = oxStart; ox < oxEnd; ox++) {
                                const g = go[rowO + ox];
                                gx[rowI + ox] += g * wv;
                                accW += g * xd[rowI + ox];
                            }
                        }
                        gw[wIdx] += accW;
                    }
                }
            }
        }
    });
    return out;
}

/** general strided convolution (used by the key encoder's stride-2 stages). */
function conv2dStrided(x: Tensor, weight: Tensor, bias: Tensor, stride: number, pad: number): Tensor {
    const [cin, h, w] = x.shape;
    const [cout, , kh, kw] = weight.shape;
    const oh = Math.floor((h + 2 * pad - kh) / stride) + 1;
    const ow = Math.floor((w + 2 * pad - kw) / stride) + 1;
    const out = new Tensor([cout, oh, ow]);
    const xd = x.data, wd = weight.data, bd = bias.data, od = out.data;
    for (let co = 0; co < cout; co++) {
        for (let oy = 0; oy < oh; oy++) {
            const iy0 = oy * stride - pad;
            for (let ox = 0; ox < ow; ox++) {
                const ix0 = ox * stride - pad;
                let acc = bd[co];
                for (let ci = 0; ci < cin; ci++) {
                    for (let ky = 0; ky < kh; ky++) {
                        const iy = iy0 + ky;
                        if (iy < 0 || iy >= h) continue;
                        const row = (ci * h + iy) * w;
                        const wRow = ((co * cin + ci) * kh + ky) * kw;
                        for (let kx = 0; kx < kw; kx++) {
                            const ix = ix0 + kx;
                            if (ix < 0 || ix >= w) continue;
                            acc += xd[row + ix] * wd[wRow + kx];
                        }
                    }
                }
                od[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        const gx = x.ensureGrad(), gw = weight.ensureGrad(), gb = bias.ensureGrad();
        for (let co = 0; co < cout; co++) {
            for (let oy = 0; oy < oh; oy++) {
                const iy0 = oy * stride - pad;
                for (let ox = 0; ox < ow; ox++) {
                    const g = go[(co * oh + oy) * ow + ox];
                    if (g === 0) continue;
                    gb[co] += g;
                    const ix0 = ox * stride - pad;
                    for (let ci = 0; ci < cin; ci++) {
                        for (let ky = 0; ky < kh; ky++) {
                            const iy = iy0 + ky;
                            if (iy < 0 || iy >= h) continue;
                            const row = (ci * h + iy) * w;
                            const wRow = ((co * cin + ci) * kh + ky) * kw;
                            for (let kx = 0; kx < kw; kx++) {
                                const ix = ix0 + kx;
                                if (ix < 0 || ix >= w) continue;
                                gx[row + ix] += g * wd[wRow + kx];
                                gw[wRow + kx] += g * xd[row + ix];
                            }
                        }
                    }
                }
            }
        }
    });
    return out;
}

export function leakyRelu(x: Tensor, alpha = 0.1): Tensor {
    const out = new Tensor(x.shape);
    const xd = x.data, od = out.data;
    for (let i = 0; i < xd.length; i++) od[i] = xd[i] >= 0 ? xd[i] : alpha * xd[i];
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        const gx = x.ensureGrad();
        for (let i = 0; i < xd.length; i++) gx[i] += xd[i] >= 0 ? go[i] : alpha * go[i];
    });
    return out;
}

export function sigmoid(x: Tensor): Tensor {
    const out = new Tensor(x.shape);
    const xd = x.data, od = out.data;
    for (let i = 0; i < xd.length; i++) od[i] = 1 / (1 + Math.exp(-xd[i]));
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        const gx = x.ensureGrad();
        for (let i = 0; i < xd.length; i++) gx[i] += go[i] * od[i] * (1 - od[i]);
    });
    return out;
}

export function add(a: Tensor, b: Tensor): Tensor {
    if (a.size !== b.size) throw new Error("add: size mismatch");
    const out = new Tensor(a.shape);
    for (let i = 0; i < a.size; i++) out.data[i] = a.data[i] + b.data[i];
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        const ga = a.ensureGrad(), gb = b.ensureGrad();
        for (let i = 0; i < go.length; i++) {
            ga[i] += go[i];
            gb[i] += go[i];
        }
    });
    return out;
}

export function scale(x: Tensor, s: number): Tensor {
    const out = new Tensor(x.shape);
    for (let i = 0; i < x.size; i++) out.data[i] = x.data[i] * s;
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        const gx = x.ensureGrad();
        for (let i = 0; i < go.length; i++) gx[i] += go[i] * s;
    });
    return out;
}

/** Clamp with straight-through gradient inside the range. */
export function clamp(x: Tensor, lo: number, hi: number): Tensor {
    const out = new Tensor(x.shape);
    const xd = x.data;
    for (let i = 0; i < xd.length; i++) out.data[i] = Math.min(hi, Math.max(lo, xd[i]));
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        const gx = x.ensureGrad();
        for (let i = 0; i < go.length; i++) if (xd[i] > lo && xd[i] < hi) gx[i] += go[i];
    });
    return out;
}

export function concatC(parts: Tensor[]): Tensor {
    const [, h, w] = parts[0].shape;
    let cTotal = 0;
    for (const p of parts) {
        if (p.shape[1] !== h || p.shape[2] !== w) throw new Error("concatC: spatial mismatch");
        cTotal += p.shape[0];
    }
    const out = new Tensor([cTotal, h, w]);
    let offset = 0;
    for (const p of parts) {
        out.data.set(p.data, offset);
        offset += p.size;
    }
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        let off = 0;
        for (const p of parts) {
            const gp = p.ensureGrad();
            for (let i = 0; i < p.size; i++) gp[i] += go[off + i];
            off += p.size;
        }
    });
    return out;
}

export function sliceC(x: Tensor, from: number, to: number): Tensor {
    const [c, h, w] = x.shape;
    if (from < 0 || to > c || from >= to) throw new Error(`sliceC: bad range ${from}..${to} of ${c}`);
    const plane = h * w;
    const out = new Tensor([to - from, h, w], x.data.slice(from * plane, to * plane));
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        const gx = x.ensureGrad();
        const base = from * plane;
        for (let i = 0; i < go.length; i++) gx[base + i] += go[i];
    });
    return out;
}

/** [c*r*r, h, w] -> [c, h*r, w*r]; block (dy,dx) comes from channel c*r*r + dy*r + dx. */
export function pixelShuffle(x: Tensor, r: number): Tensor {
    const [crr, h, w] = x.shape;
    if (crr % (r * r) !== 0) throw new Error(`pixelShuffle: ${crr} channels not divisible by ${r * r}`);
    const c = crr / (r * r);
    const out = new Tensor([c, h * r, w * r]);
    const xd = x.data, od = out.data;
    const oh = h * r, ow = w * r;
    for (let co = 0; co < c; co++) {
        for (let dy = 0; dy < r; dy++) {
            for (let dx = 0; dx < r; dx++) {
                const ciBase = ((co * r + dy) * r + dx) * h * w;
                for (let y = 0; y < h; y++) {
                    const srcRow = ciBase + y * w;
                    const dstRow = (co * oh + y * r + dy) * ow + dx;
                    for (let xx = 0; xx < w; xx++) {
                        od[dstRow + xx * r] = xd[srcRow + xx];
                    }
                }
            }
        }
    }
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        const gx = x.ensureGrad();
        for (let co = 0; co < c; co++) {
            for (let dy = 0; dy < r; dy++) {
                for (let dx = 0; dx < r; dx++) {
                    const ciBase = ((co * r + dy) * r + dx) * h * w;
                    for (let y = 0; y < h; y++) {
                        const srcRow = ciBase + y * w;
                        const dstRow = (co * oh + y * r + dy) * ow + dx;
                        for (let xx = 0; xx < w; xx++) {
                            gx[srcRow + xx] += go[dstRow + xx * r];
                        }
                    }
                }
            }
        }
    });
    return out;
}

/** Bilinear warp: out(c, p) = feat(c, p + flow(p)), border-clamped. */
export function bilinearWarp(feat: Tensor, flow: Tensor): Tensor {
    const [c, h, w] = feat.shape;
    if (flow.shape[0] !== 2 || flow.shape[1] !== h || flow.shape[2] !== w) {
        throw new Error(`bilinearWarp: flow ${flow.shape} does not match feature ${feat.shape}`);
    }
    const out = new Tensor([c, h, w]);
    const fd = feat.data, ld = flow.data, od = out.data;
    const plane = h * w;
    for (let y = 0; y < h; y++) {
        for (let x = 0; x < w; x++) {
            const p = y * w + x;
            const sy = y + ld[p];
            const sx = x + ld[plane + p];
            const ty = Math.min(h - 1, Math.max(0, sy));
            const tx = Math.min(w - 1, Math.max(0, sx));
            const y0 = Math.min(h - 1, Math.max(0, Math.floor(ty)));
            const x0 = Math.min(w - 1, Math.max(0, Math.floor(tx)));
            const y1 = Math.min(h - 1, y0 + 1);
            const x1 = Math.min(w - 1, x0 + 1);
            const fy = ty - y0;
            const fx = tx - x0;
            const w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx, w10 = fy * (1 - fx), w11 = fy * fx;
            for (let ci = 0; ci < c; ci++) {
                const base = ci * plane;
                od[base + p] =
                    w00 * fd[base + y0 * w + x0] +
                    w01 * fd[base + y0 * w + x1] +
                    w10 * fd[base + y1 * w + x0] +
                    w11 * fd[base + y1 * w + x1];
            }
        }
    }
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        const gf = feat.ensureGrad();
        const gl = flow.ensureGrad();
        for (let y = 0; y < h; y++) {
            for (let x = 0; x < w; x++) {
                const p = y * w + x;
                const sy = y + ld[p];
                const sx = x + ld[plane + p];
                const inY = sy > 0 && sy < h - 1; // clamped edges get zero position gradient
                const inX = sx > 0 && sx < w - 1;
                const ty = Math.min(h - 1, Math.max(0, sy));
                const tx = Math.min(w - 1, Math.max(0, sx));
                const y0 = Math.min(h - 1, Math.max(0, Math.floor(ty)));
                const x0 = Math.min(w - 1, Math.max(0, Math.floor(tx)));
                const y1 = Math.min(h - 1, y0 + 1);
                const x1 = Math.min(w - 1, x0 + 1);
                const fy = ty - y0;
                const fx = tx - x0;
                const w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx, w10 = fy * (1 - fx), w11 = fy * fx;
                let gy = 0, gx = 0;
                for (let ci = 0; ci < c; ci++) {
                    const base = ci * plane;
                    const g = go[base + p];
                    if (g === 0) continue;
                    const v00 = fd[base + y0 * w + x0], v01 = fd[base + y0 * w + x1];
                    const v10 = fd[base + y1 * w + x0], v11 = fd[base + y1 * w + x1];
                    gf[base + y0 * w + x0] += g * w00;
                    gf[base + y0 * w + x1] += g * w01;
                    gf[base + y1 * w + x0] += g * w10;
                    gf[base + y1 * w + x1] += g * w11;
                    gy += g * ((1 - fx) * (v10 - v00) + fx * (v11 - v01));
                    gx += g * ((1 - fy) * (v01 - v00) + fy * (v11 - v10));
                }
                if (inY) gl[p] += gy;
                if (inX) gl[plane + p] += gx;
            }
        }
    });
    return out;
}

/**
 * Modulated deformable 3x3 convolution, stride 1, pad 1, one offset group
 * per input-channel group. offsets: [groups*9*2, h, w] (dy then dx per
 * tap), masks: [groups*9, h, w] in [0,1], weight: [cout, cin, 3, 3].
 */
/** Masked bilinear gather into an im2col matrix col[(ci*9+k)*plane + p]. */
function deformGather(
    xd: Float64Array,
    odta: Float64Array,
    md: Float64Array,
    h: number,
    w: number,
    groups: number,
    perG: number,
    col: Float64Array,
): void {
    const plane = h * w;
    for (let g = 0; g < groups; g++) {
        for (let k = 0; k < 9; k++) {
            const ky = ((k / 3) | 0) - 1;
            const kx = (k % 3) - 1;
            const offY = ((g * 9 + k) * 2) * plane;
            const offX = offY + plane;
            const mBase = (g * 9 + k) * plane;
            for (let y = 0; y < h; y++) {
                for (let xx = 0; xx < w; xx++) {
                    const p = y * w + xx;
                    const sy = y + ky + odta[offY + p];
                    const sx = xx + kx + odta[offX + p];
                    const m = md[mBase + p];
                    const ty = sy < 0 ? 0 : sy > h - 1 ? h - 1 : sy;
                    const tx = sx < 0 ? 0 : sx > w - 1 ? w - 1 : sx;
                    let y0 = Math.floor(ty);
                    let x0 = Math.floor(tx);
                    if (y0 > h - 1) y0 = h - 1;
                    if (x0 > w - 1) x0 = w - 1;
                    const y1 = y0 + 1 > h - 1 ? h - 1 : y0 + 1;
                    const x1 = x0 + 1 > w - 1 ? w - 1 : x0 + 1;
                    const fy = ty - y0;
                    const fx = tx - x0;
                    const w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx, w10 = fy * (1 - fx), w11 = fy * fx;
                    const r0 = y0 * w, r1 = y1 * w;
                    for (let cg = 0; cg < perG; cg++) {
                        const base = (g * perG + cg) * plane;
                        col[((g * perG + cg) * 9 + k) * plane + p] =
                            m *
                            (w00 * xd[base + r0 + x0] +
                                w01 * xd[base + r0 + x1] +
                                w10 * xd[base + r1 + x0] +
                                w11 * xd[base + r1 + x1]);
                    }
                }
            }
        }
    }
}

export function deformConv(
    x: Tensor,
    offsets: Tensor,
    masks: Tensor,
    weight: Tensor,
    bias: Tensor,
    groups: number,
): Tensor {
    const [cin, h, w] = x.shape;
    const [cout, cinW] = weight.shape;
    if (cinW !== cin) throw new Error("deformConv: weight channel mismatch");
    if (cin % groups !== 0) throw new Error("deformConv: channels not divisible by groups");
    if (offsets.shape[0] !== groups * 18 || masks.shape[0] !== groups * 9) {
        throw new Error(`deformConv: expected ${groups * 18} offset / ${groups * 9} mask channels`);
    }
    const perG = cin / groups;
    const plane = h * w;
    const out = new Tensor([cout, h, w]);
    const xd = x.data, odta = offsets.data, md = masks.data, wd = weight.data, bd = bias.data, od = out.data;

    const col = new Float64Array(cin * 9 * plane);
    deformGather(xd, odta, md, h, w, groups, perG, col);
    for (let co = 0; co < cout; co++) {
        od.fill(bd[co], co * plane, (co + 1) * plane);
        const oBase = co * plane;
        for (let t = 0; t < cin * 9; t++) {
            const wv = wd[co * cin * 9 + t];
            if (wv === 0) continue;
            const cBase = t * plane;
            for (let p = 0; p < plane; p++) od[oBase + p] += wv * col[cBase + p];
        }
    }
    // col is rebuilt in the backward pass rather than captured (memory).
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        const gx = x.ensureGrad();
        const gOff = offsets.ensureGrad();
        const gM = masks.ensureGrad();
        const gW = weight.ensureGrad();
        const gB = bias.ensureGrad();
        const colB = new Float64Array(cin * 9 * plane);
        deformGather(xd, odta, md, h, w, groups, perG, colB);
        const dCol = new Float64Array(cin * 9 * plane);
        for (let co = 0; co < cout; co++) {
            const oBase = co * plane;
            let accB = 0;
            for (let p = 0; p < plane; p++) accB += go[oBase + p];
            gB[co] += accB;
            for (let t = 0; t < cin * 9; t++) {
                const wIdx = co * cin * 9 + t;
                const wv = wd[wIdx];
                const cBase = t * plane;
                let accW = 0;
                for (let p = 0; p < plane; p++) {
                    const g = go[oBase + p];
                    dCol[cBase + p] += g * wv;
                    accW += g * colB[cBase + p];
                }
                gW[wIdx] += accW;
            }
        }
        // scatter dCol through the masked bilinear sampling
        for (let g = 0; g < groups; g++) {
            for (let k = 0; k < 9; k++) {
                const ky = ((k / 3) | 0) - 1;
                const kx = (k % 3) - 1;
                const offY = ((g * 9 + k) * 2) * plane;
                const offX = offY + plane;
                const mBase = (g * 9 + k) * plane;
                for (let y = 0; y < h; y++) {
                    for (let xx = 0; xx < w; xx++) {
                        const p = y * w + xx;
                        const sy = y + ky + odta[offY + p];
                        const sx = xx + kx + odta[offX + p];
                        const inY = sy > 0 && sy < h - 1;
                        const inX = sx > 0 && sx < w - 1;
                        const m = md[mBase + p];
                        const ty = sy < 0 ? 0 : sy > h - 1 ? h - 1 : sy;
                        const tx = sx < 0 ? 0 : sx > w - 1 ? w - 1 : sx;
                        let y0 = Math.floor(ty);
                        let x0 = Math.floor(tx);
                        if (y0 > h - 1) y0 = h - 1;
                        if (x0 > w - 1) x0 = w - 1;
                        const y1 = y0 + 1 > h - 1 ? h - 1 : y0 + 1;
                        const x1 = x0 + 1 > w - 1 ? w - 1 : x0 + 1;
                        const fy = ty - y0;
                        const fx = tx - x0;
                        const w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx, w10 = fy * (1 - fx), w11 = fy * fx;
                        const r0 = y0 * w, r1 = y1 * w;
                        let gMask = 0, gy = 0, gxp = 0;
                        for (let cg = 0; cg < perG; cg++) {
                            const ci = g * perG + cg;
                            const base = ci * plane;
                            const i00 = base + r0 + x0, i01 = base + r0 + x1;
                            const i10 = base + r1 + x0, i11 = base + r1 + x1;
                            const v00 = xd[i00], v01 = xd[i01], v10 = xd[i10], v11 = xd[i11];
                            const v = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11;
                            const gTap = dCol[(ci * 9 + k) * plane + p];
                            if (gTap === 0) continue;
                            gMask += gTap * v;
                            const gv = gTap * m;
                            gx[i00] += gv * w00;
                            gx[i01] += gv * w01;
                            gx[i10] += gv * w10;
                            gx[i11] += gv * w11;
                            gy += gv * ((1 - fx) * (v10 - v00) + fx * (v11 - v01));
                            gxp += gv * ((1 - fy) * (v01 - v00) + fy * (v11 - v10));
                        }
                        gM[mBase + p] += gMask;
                        if (inY) gOff[offY + p] += gy;
                        if (inX) gOff[offX + p] += gxp;
                    }
                }
            }
        }
    });
    return out;
}

/** Per-position channel-mean similarity: out(p) = mean_c a(c,p)*b(c,p). */
export function dotC(a: Tensor, b: Tensor): Tensor {
    const [c, h, w] = a.shape;
    const plane = h * w;
    const out = new Tensor([1, h, w]);
    for (let p = 0; p < plane; p++) {
        let acc = 0;
        for (let ci = 0; ci < c; ci++) acc += a.data[ci * plane + p] * b.data[ci * plane + p];
        out.data[p] = acc / c;
    }
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        const ga = a.ensureGrad(), gb = b.ensureGrad();
        for (let p = 0; p < plane; p++) {
            const g = go[p] / c;
            for (let ci = 0; ci < c; ci++) {
                ga[ci * plane + p] += g * b.data[ci * plane + p];
                gb[ci * plane + p] += g * a.data[ci * plane + p];
            }
        }
    });
    return out;
}

/** Positionwise softmax over a stack of [1,h,w] score maps. */
export function softmaxStack(scores: Tensor[]): Tensor[] {
    const n = scores.length;
    const plane = scores[0].size;
    const outs = scores.map((s) => new Tensor(s.shape));
    for (let p = 0; p < plane; p++) {
        let max = -Infinity;
        for (let l = 0; l < n; l++) max = Math.max(max, scores[l].data[p]);
        let sum = 0;
        for (let l = 0; l < n; l++) {
            const e = Math.exp(scores[l].data[p] - max);
            outs[l].data[p] = e;
            sum += e;
        }
        for (let l = 0; l < n; l++) outs[l].data[p] /= sum;
    }
    bwd(() => {
        if (outs.every((o) => o.grad === null)) return;
        for (let p = 0; p < plane; p++) {
            let dot = 0;
            for (let l = 0; l < n; l++) {
                const g = outs[l].grad;
                if (g) dot += g[p] * outs[l].data[p];
            }
            for (let l = 0; l < n; l++) {
                const g = outs[l].grad;
                const gs = scores[l].ensureGrad();
                gs[p] += outs[l].data[p] * ((g ? g[p] : 0) - dot);
            }
        }
    });
    return outs;
}

/** out(c,p) = sum_l weight_l(p) * feat_l(c,p). */
export function weightedSumC(weights: Tensor[], feats: Tensor[]): Tensor {
    const [c, h, w] = feats[0].shape;
    const plane = h * w;
    const out = new Tensor([c, h, w]);
    for (let l = 0; l < feats.length; l++) {
        const wl = weights[l].data, fl = feats[l].data;
        for (let ci = 0; ci < c; ci++) {
            const base = ci * plane;
            for (let p = 0; p < plane; p++) out.data[base + p] += wl[p] * fl[base + p];
        }
    }
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        for (let l = 0; l < feats.length; l++) {
            const gw = weights[l].ensureGrad();
            const gf = feats[l].ensureGrad();
            const wl = weights[l].data, fl = feats[l].data;
            for (let ci = 0; ci < c; ci++) {
                const base = ci * plane;
                for (let p = 0; p < plane; p++) {
                    gf[base + p] += go[base + p] * wl[p];
                    gw[p] += go[base + p] * fl[base + p];
                }
            }
        }
    });
    return out;
}

/** Mean Charbonnier distance sqrt(d^2 + eps^2); returns a scalar tensor. */
export function charbonnier(pred: Tensor, target: Tensor, eps = 1e-8): Tensor {
    if (pred.size !== target.size) throw new Error("charbonnier: size mismatch");
    const out = new Tensor([1]);
    const n = pred.size;
    let acc = 0;
    for (let i = 0; i < n; i++) {
        const d = pred.data[i] - target.data[i];
        acc += Math.sqrt(d * d + eps * eps);
    }
    out.data[0] = acc / n;
    bwd(() => {
        const go = out.grad;
        if (!go) return;
        const g = go[0] / n;
        const gp = pred.ensureGrad();
        for (let i = 0; i < n; i++) {
            const d = pred.data[i] - target.data[i];
            gp[i] += (g * d) / Math.sqrt(d * d + eps * eps);
        }
    });
    return out;
}
