/**
 * Pointer-to-workspace mapping for the cross-section view.
 *
 * The canvas shows the scene's x-z plane: canvas x maps to workspace x,
 * canvas y (down) maps to workspace z (up). The out-of-plane coordinate y
 * comes from the depth slider. The mapping is fixed and documented so
 * recorded pointer scripts replay identically:
 *
 *     workspace_x = (px - width/2) / scale
 *     workspace_z = (height/2 - py) / scale + zCenter
 *     workspace_y = depth slider value
 *
 * `scale` is in pixels per meter (default 2000: a 0.30 m field of view on a
 * 600 px canvas).
 */

import { Vec3 } from "./protocol";

export type ViewTransform = {
    width: number;
    height: number;
    scale: number;   // px per meter
    zCenter: number; // workspace z shown at the canvas vertical center
};

export const DEFAULT_TRANSFORM: ViewTransform = {
    width: 600,
    height: 600,
    scale: 2000,
    zCenter: 0.07,
};

export function pointerToWorkspace(
    px: number,
    py: number,
    depthY: number,
    view: ViewTransform = DEFAULT_TRANSFORM,
): Vec3 {
    const x = (px - view.width / 2) / view.scale;
    const z = (view.height / 2 - py) / view.scale + view.zCenter;
    return [x, depthY, z];
}

export function workspaceToPointer(
    p: Vec3,
    view: ViewTransform = DEFAULT_TRANSFORM,
): { px: number; py: number } {
    return {
        px: p[0] * view.scale + view.width / 2,
        py: view.height / 2 - (p[2] - view.zCenter) * view.scale,
    };
}
