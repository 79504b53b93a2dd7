/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const __wbg_frame_free: (a: number, b: number) => void;
export const demo_inbetween: (a: number, b: number) => [number, number, number];
export const demo_load_clip: (a: number, b: number, c: number) => [number, number, number];
export const demo_new: (a: number) => [number, number, number];
export const demo_ssim: (a: number) => [number, number, number];
export const frame_height: (a: number) => number;
export const frame_rgba: (a: number) => [number, number];
export const frame_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
