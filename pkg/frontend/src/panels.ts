/** Thin DOM layer: writes chart geometry into SVG elements.
 *
 * Pinned setups overlay as extra series in distinct hues; the active setup
 * always draws last (on top).
 */

import { densityPath, histogramBars, histogramMeanMarker, type Box } from "./charts";
import type { PanelPayloads } from "./types";

const BOX: Box = { width: 360, height: 220, padding: 28 };
const PIN_COLORS = ["#7aa6c2", "#c2917a", "#8fc27a", "#b07ac2",
                    "#c27a93", "#7ac2b8", "#a3a37a", "#8a8a8a"];
const ACTIVE_COLOR = "#1f3a5f";

export interface PanelSet {
  r2: SVGElement;
  tau2: SVGElement;
  marginal: SVGElement;
  kappa: SVGElement;
  meff: SVGElement;
}

function line(d: string, color: string, width = 1.8): string {
  return `<path d="${d}" fill="none" stroke="${color}" stroke-width="${width}"/>`;
}

export function renderPanels(
  panels: PanelSet,
  active: PanelPayloads,
  pinned: { color: string; payloads: PanelPayloads }[],
  marginalLogY: boolean,
): void {
  const overlayed = (key: "r2" | "tau2" | "marginal" | "kappa", logY = false) => {
    const parts = pinned.map(({ color, payloads }) =>
      line(densityPath(payloads[key], BOX, logY).d, color, 1.1));
    parts.push(line(densityPath(active[key], BOX, logY).d, ACTIVE_COLOR));
    return parts.join("");
  };
  panels.r2.innerHTML = overlayed("r2");
  panels.tau2.innerHTML = overlayed("tau2");
  panels.marginal.innerHTML = overlayed("marginal", marginalLogY);
  panels.kappa.innerHTML = overlayed("kappa");

  const bars = histogramBars(active.meff, BOX)
    .map((b) => `<rect x="${b.x.toFixed(2)}" y="${b.y.toFixed(2)}" ` +
      `width="${b.width.toFixed(2)}" height="${b.height.toFixed(2)}" ` +
      `fill="${ACTIVE_COLOR}" fill-opacity="0.55"/>`)
    .join("");
  const marker = histogramMeanMarker(active.meff, BOX);
  panels.meff.innerHTML = bars +
    `<line x1="${marker.toFixed(2)}" y1="${BOX.padding}" x2="${marker.toFixed(2)}" ` +
    `y2="${BOX.height - BOX.padding}" stroke="#a33" stroke-dasharray="4 3"/>`;

  for (const [key, el] of Object.entries(panels)) {
    (el as SVGElement).dataset.checksum =
      active.checksums[key === "meff" ? "meff" : key] ?? "";
  }
}

export function pinColor(index: number): string {
  return PIN_COLORS[index % PIN_COLORS.length];
}
