/**
 * Per-code kappa trend across codebook versions: one point per (version,
 * run), in run-creation order, rendered as an inline SVG with the two
 * agreement thresholds marked. Undefined kappa renders as a gap marker
 * rather than a fabricated value.
 */

import { bandFor, shortVersion } from './model.js';
import type { RawTrendPoint, TrendPoint } from './model.js';

export function buildTrendPoints(raw: RawTrendPoint[]): TrendPoint[] {
  return raw.map((p) => ({
    codebookVersion: p.codebook_version,
    runId: p.run_id,
    kappa: p.kappa,
    band: p.kappa === null ? null : bandFor(p.kappa),
  }));
}

export interface TrendChartOptions {
  width?: number;
  height?: number;
}

const PADDING = 24;

/** Map kappa in [-1, 1] to a y pixel (top = 1). */
function yFor(kappa: number, height: number): number {
  return PADDING + ((1 - kappa) / 2) * (height - 2 * PADDING);
}

export function renderTrendSvg(points: TrendPoint[], opts: TrendChartOptions = {}): string {
  const width = opts.width ?? 480;
  const height = opts.height ?? 200;
  const innerWidth = width - 2 * PADDING;
  const step = points.length > 1 ? innerWidth / (points.length - 1) : 0;
  const xFor = (i: number) => (points.length > 1 ? PADDING + i * step : width / 2);

  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" class="kappa-trend" role="img">`,
  ];
  for (const [value, label] of [
    [0.75, 'excellent'],
    [0.6, 'substantial'],
  ] as const) {
    const y = yFor(value, height).toFixed(1);
    parts.push(
      `<line class="threshold threshold-${label}" x1="${PADDING}" y1="${y}" x2="${width - PADDING}" y2="${y}" stroke-dasharray="4 3"/>`,
      `<text class="threshold-label" x="${width - PADDING}" y="${y}" dy="-3" text-anchor="end">${label} (${value})</text>`,
    );
  }

  const defined = points
    .map((p, i) => ({ p, i }))
    .filter(({ p }) => p.kappa !== null) as { p: TrendPoint & { kappa: number }; i: number }[];
  if (defined.length > 1) {
    const path = defined
      .map(({ p, i }, k) => `${k === 0 ? 'M' : 'L'}${xFor(i).toFixed(1)},${yFor(p.kappa, height).toFixed(1)}`)
      .join(' ');
    parts.push(`<path class="trend-line" d="${path}" fill="none"/>`);
  }

  points.forEach((p, i) => {
    const x = xFor(i).toFixed(1);
    const version = shortVersion(p.codebookVersion);
    if (p.kappa === null) {
      // Gap marker: the run exists but its kappa is undefined (excluded).
      parts.push(
        `<g class="point undefined" data-run="${p.runId}">` +
          `<text x="${x}" y="${yFor(0, height).toFixed(1)}" text-anchor="middle">&times;</text>` +
          `<title>version ${version}: kappa undefined (excluded from aggregates)</title>` +
          '</g>',
      );
    } else {
      const y = yFor(p.kappa, height).toFixed(1);
      parts.push(
        `<g class="point band-${p.band}" data-run="${p.runId}">` +
          `<circle cx="${x}" cy="${y}" r="4"/>` +
          `<title>version ${version}: kappa ${p.kappa.toFixed(3)} (${p.band})</title>` +
          '</g>',
      );
    }
  });
  parts.push('</svg>');
  return parts.join('\n');
}
