/**
 * Minimal reverse-mode autodiff over float64 CHW tensors.
 *
 * Ops append backward closures to the active Tape; Tape.backward() walks
 * them in reverse. Everything runs single-threaded and deterministic.
 */

export class Tensor {
    data: Float64Array;
    grad: Float64Array | null = null;
    shape: number[];
    requiresGrad: boolean;

    constructor(shape: number[], data?: Float64Array, requiresGrad = false) {
        this.shape = shape.slice();
        const n = shape.reduce((a, b) => a * b, 1);
        if (data !== undefined) {
            if (data.length !== n) throw new Error(`data length ${data.length} != shape product ${n}`);
            this.data = data;
        } else {
            this.data = new Float64Array(n);
        }
        this.requiresGrad = requiresGrad;
    }

    get size(): number {
        return this.data.length;
    }

    ensureGrad(): Float64Array {
        if (this.grad === null) this.grad = new Float64Array(this.data.length);
        return this.grad;
    }

    zeroGrad(): void {
        if (this.grad !== null) this.grad.fill(0);
    }

    clone(): Tensor {
        return new Tensor(this.shape, this.data.slice(), this.requiresGrad);
    }

    static zeros(shape: number[]): Tensor {
        return new Tensor(shape);
    }

    static filled(shape: number[], value: number): Tensor {
        const t = new Tensor(shape);
        t.data.fill(value);
        return t;
    }
}

export class Tape {
    private steps: Array<() => void> = [];
    recording = true;

    push(backward: () => void): void {
        if (this.recording) this.steps.push(backward);
    }

    backward(): void {
        for (let i = this.steps.length - 1; i >= 0; i--) this.steps[i]();
    }

    reset(): void {
        this.steps.length = 0;
    }

    get length(): number {
        return this.steps.length;
    }
}

let activeTape: Tape | null = null;

export function withTape<T>(tape: Tape, fn: () => T): T {
    const prev = activeTape;
    activeTape = tape;
    try {
        return fn();
    } finally {
        activeTape = prev;
    }
}

export function tape(): Tape | null {
    return activeTape;
}

/** Deterministic PRNG (mulberry32). */
export class Rng {
    private state: number;

    constructor(seed: number) {
        this.state = seed >>> 0;
    }

    next(): number {
        let t = (this.state += 0x6d2b79f5);
        t = Math.imul(t ^ (t >>> 15), t | 1);
        t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
        return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
    }

    uniform(lo: number, hi: number): number {
        return lo + (hi - lo) * this.next();
    }

    int(lo: number, hi: number): number {
        return lo + Math.floor(this.next() * (hi - lo));
    }

    /** Box-Muller normal. */
    normal(): number {
        let u = 0;
        while (u === 0) u = this.next();
        const v = this.next();
        return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
    }
}

/** He-style uniform init scaled down for stable small-model training. */
export function initConvWeight(rng: Rng, cout: number, cin: number, kh: number, kw: number, gain = 0.5): Tensor {
    const fanIn = cin * kh * kw;
    const bound = gain * Math.sqrt(6 / fanIn);
    const t = new Tensor([cout, cin, kh, kw], undefined, true);
    for (let i = 0; i < t.data.length; i++) t.data[i] = rng.uniform(-bound, bound);
    return t;
}
