/* tslint:disable */
/* eslint-disable */

/**
 * A synthetic clip, a small untrained generator and the last generated sample.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Generates the clip between the current key frames with noise from
     * `noise_seed`. Returns the generated strip above the ground truth.
     */
    inbetween(noise_seed: number): Frame;
    /**
     * Selects synthetic clip `index` of dataset `seed` and returns its 16 frames.
     */
    load_clip(seed: number, index: number): Frame;
    /**
     * Builds a reduced-width generator with weights drawn from `model_seed`.
     */
    constructor(model_seed: number);
    /**
     * SSIM of the last generated clip's intermediate frames against the truth.
     */
    ssim(): number;
}

/**
 * An RGBA raster handed to a canvas.
 */
export class Frame {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    rgba(): Uint8Array;
    readonly height: number;
    readonly width: number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly __wbg_frame_free: (a: number, b: number) => void;
    readonly demo_inbetween: (a: number, b: number) => [number, number, number];
    readonly demo_load_clip: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_new: (a: number) => [number, number, number];
    readonly demo_ssim: (a: number) => [number, number, number];
    readonly frame_height: (a: number) => number;
    readonly frame_rgba: (a: number) => [number, number];
    readonly frame_width: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
