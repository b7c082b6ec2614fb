// Feature-glyph fallback for datasets without images: the embedding is
// drawn as a signed bar strip and the g-descriptor as colored stripe
// blocks, so two panels stay visually comparable.

import { Panel } from "./api.js";

const GLYPH_W = 220;
const GLYPH_H = 120;
const STRIPE_H = 26;

export function renderGlyph(canvas: HTMLCanvasElement, panel: Panel): void {
  canvas.width = GLYPH_W;
  canvas.height = GLYPH_H + (panel.g ? STRIPE_H : 0);
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = "#1c1f26";
  ctx.fillRect(0, 0, canvas.width, canvas.height);

  const values = panel.feature;
  const bar = GLYPH_W / values.length;
  const mid = GLYPH_H / 2;
  const scale = mid / Math.max(...values.map(Math.abs), 1e-9);
  values.forEach((v, i) => {
    ctx.fillStyle = v >= 0 ? "#4fa3ff" : "#ff8c5a";
    const h = Math.abs(v) * scale;
    ctx.fillRect(i * bar, v >= 0 ? mid - h : mid, Math.max(1, bar - 1), h);
  });
  ctx.strokeStyle = "#39404d";
  ctx.beginPath();
  ctx.moveTo(0, mid);
  ctx.lineTo(GLYPH_W, mid);
  ctx.stroke();

  if (panel.g) {
    const block = GLYPH_W / panel.g.length;
    panel.g.forEach((stripe, i) => {
      ctx.fillStyle = stripeColor(stripe);
      ctx.fillRect(i * block, GLYPH_H + 2, Math.max(1, block - 1), STRIPE_H - 4);
    });
  }
}

function stripeColor(stripe: number): string {
  const hue = Math.round((stripe * 57) % 360);
  return `hsl(${hue}, 65%, 55%)`;
}
