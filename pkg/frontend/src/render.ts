// Canvas rendering of the task board, tools, peg, blend gauge and
// context-probability bars. All geometry is in board metres and projected to
// canvas pixels with a single top-down scale.

import type { ViewModel } from "./view.js";

export interface RenderConfig {
  /** Half-width of the visible board in metres. */
  viewHalfWidth: number;
  /** Task site positions in metres (x, y). */
  sites: Array<[number, number]>;
  siteRadius: number;
}

export function defaultRenderConfig(): RenderConfig {
  const r = 0.03;
  const sites: Array<[number, number]> = [0, 1, 2].map((k) => {
    const ang = Math.PI / 2 + (2 * Math.PI * k) / 3;
    return [r * Math.cos(ang), r * Math.sin(ang)];
  });
  return { viewHalfWidth: 0.08, sites, siteRadius: 0.003 };
}

function project(
  x: number,
  y: number,
  cfg: RenderConfig,
  w: number,
  h: number,
): [number, number] {
  const s = Math.min(w, h) / (2 * cfg.viewHalfWidth);
  return [w / 2 + x * s, h / 2 - y * s];
}

export function render(
  ctx: CanvasRenderingContext2D,
  view: ViewModel,
  cfg: RenderConfig,
): void {
  const w = ctx.canvas.width;
  const h = ctx.canvas.height;
  const scale = Math.min(w, h) / (2 * cfg.viewHalfWidth);
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, w, h);

  // sites
  for (const [sx, sy] of cfg.sites) {
    const [px, py] = project(sx, sy, cfg, w, h);
    ctx.beginPath();
    ctx.arc(px, py, cfg.siteRadius * scale, 0, 2 * Math.PI);
    ctx.strokeStyle = "#5a6672";
    ctx.lineWidth = 2;
    ctx.stroke();
  }

  // peg
  if (view.peg) {
    const [px, py] = project(view.peg.p[0], view.peg.p[1], cfg, w, h);
    ctx.beginPath();
    ctx.arc(px, py, 6, 0, 2 * Math.PI);
    ctx.fillStyle = "#e6b450";
    ctx.fill();
  }

  // tools
  if (view.tools) {
    const colors = { left: "#4f9cf0", right: "#f0604f" } as const;
    for (const arm of ["left", "right"] as const) {
      const tool = view.tools[arm];
      const [px, py] = project(tool.p[0], tool.p[1], cfg, w, h);
      ctx.beginPath();
      ctx.arc(px, py, 8, 0, 2 * Math.PI);
      ctx.strokeStyle = colors[arm];
      ctx.lineWidth = tool.grip ? 5 : 2;
      ctx.stroke();
    }
  }

  // blend gauge: the autonomy share (1 - alpha) fills from the left
  const gaugeW = w - 20;
  ctx.fillStyle = "#2a3038";
  ctx.fillRect(10, h - 28, gaugeW, 8);
  ctx.fillStyle = "#59c98a";
  ctx.fillRect(10, h - 28, gaugeW * (1 - view.alpha), 8);

  // context probability bars
  if (view.probs) {
    const barW = 40;
    view.probs.forEach((p, i) => {
      const x = 10 + i * (barW + 8);
      const bh = 50 * p;
      ctx.fillStyle = "#7a86f0";
      ctx.fillRect(x, h - 40 - bh, barW, bh);
    });
  }

  // status text
  ctx.fillStyle = "#d7dde3";
  ctx.font = "13px monospace";
  ctx.fillText(view.statusLine, 10, 18);
  ctx.fillText(
    `t=${view.clock.toFixed(2)}s  ${view.contextLabel}  α=${view.alpha.toFixed(2)}`,
    10,
    36,
  );
  if (view.metrics) {
    const m = view.metrics;
    ctx.fillText(
      `M=${m.M.toFixed(3)} T=${m.T.toFixed(1)} A=${m.A.toFixed(1)} C=${m.C}`,
      10,
      54,
    );
  }
}
