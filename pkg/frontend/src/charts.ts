/** Pure chart geometry: grid payloads in, SVG path strings out.
 *
 * Rendering math only; every plotted number comes straight from a service
 * payload.  Kept DOM-free so the full pipeline is unit-testable.
 */

import type { DensityGrid, MeffResult } from "./types";

export interface Box {
  width: number;
  height: number;
  padding: number;
}

export interface LinePath {
  d: string;
  xDomain: [number, number];
  yDomain: [number, number];
}

function scale(domain: [number, number], range: [number, number]) {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  return (v: number) => r0 + ((v - d0) / span) * (r1 - r0);
}

export function densityPath(grid: DensityGrid, box: Box, logY = false): LinePath {
  if (grid.x.length !== grid.density.length || grid.x.length === 0) {
    throw new Error("grid arrays must be non-empty and of equal length");
  }
  const ys = logY ? grid.density.map((d) => Math.log10(Math.max(d, 1e-300))) : grid.density;
  const xDomain: [number, number] = [Math.min(...grid.x), Math.max(...grid.x)];
  const yMax = Math.max(...ys);
  const yMin = logY ? Math.max(Math.min(...ys), yMax - 12) : 0;
  const sx = scale(xDomain, [box.padding, box.width - box.padding]);
  const sy = scale([yMin, yMax], [box.height - box.padding, box.padding]);
  const pieces = grid.x.map((x, i) => {
    const y = Math.min(Math.max(ys[i], yMin), yMax);
    return `${i === 0 ? "M" : "L"}${sx(x).toFixed(2)},${sy(y).toFixed(2)}`;
  });
  return { d: pieces.join(""), xDomain, yDomain: [yMin, yMax] };
}

export interface HistogramBar {
  x: number;
  y: number;
  width: number;
  height: number;
}

export function histogramBars(meff: MeffResult, box: Box): HistogramBar[] {
  const { counts, edges } = meff.histogram;
  if (edges.length !== counts.length + 1) {
    throw new Error("histogram edges must be one longer than counts");
  }
  const xDomain: [number, number] = [edges[0], edges[edges.length - 1]];
  const maxCount = Math.max(...counts, 1);
  const sx = scale(xDomain, [box.padding, box.width - box.padding]);
  const sy = scale([0, maxCount], [box.height - box.padding, box.padding]);
  return counts.map((c, i) => {
    const x0 = sx(edges[i]);
    const x1 = sx(edges[i + 1]);
    const top = sy(c);
    return {
      x: x0,
      y: top,
      width: Math.max(x1 - x0, 0),
      height: box.height - box.padding - top,
    };
  });
}

/** Mean of the histogram payload, used only for axis annotation (the
 * displayed mean itself comes from the service's `mean` field). */
export function histogramMeanMarker(meff: MeffResult, box: Box): number {
  const { edges } = meff.histogram;
  const xDomain: [number, number] = [edges[0], edges[edges.length - 1]];
  return scale(xDomain, [box.padding, box.width - box.padding])(meff.mean);
}
