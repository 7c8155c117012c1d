import { escapeHtml } from "./linkify.js";
import type { EvalReport, FailureCounts, TokenEfficiencyBlock } from "./types.js";

export interface BarDatum {
  label: string;
  value: number;
}

export interface DashboardView {
  reportId: string;
  backendId: string;
  overallAccuracy: number;
  batchSeries: BarDatum[];
  qtypeSeries: BarDatum[];
  failureCounts: FailureCounts;
  efficiency: TokenEfficiencyBlock | null;
}

const QTYPE_ORDER = [
  "published_date",
  "description",
  "exploitability_score",
  "impact_score",
  "base_score",
];

function qtypeLabel(value: string): string {
  return value
    .split("_")
    .map((w) => w.charAt(0).toUpperCase() + w.slice(1))
    .join(" ");
}

/** Derive every series directly from the fetched report JSON. The UI never
 * re-judges rows; the server's aggregates are the single source of truth. */
export function buildDashboard(reportId: string, report: EvalReport): DashboardView {
  const batchSeries = Object.keys(report.per_batch_accuracy)
    .sort((a, b) => Number(a) - Number(b))
    .map((key) => ({
      label: `batch ${key}`,
      value: report.per_batch_accuracy[key] ?? 0,
    }));
  const qtypeSeries = QTYPE_ORDER.filter((q) => q in report.per_qtype_accuracy).map((q) => ({
    label: qtypeLabel(q),
    value: report.per_qtype_accuracy[q] ?? 0,
  }));
  return {
    reportId,
    backendId: report.backend_id,
    overallAccuracy: report.overall_accuracy,
    batchSeries,
    qtypeSeries,
    failureCounts: report.failure_counts,
    efficiency: report.token_efficiency,
  };
}

function barChartHtml(title: string, series: BarDatum[], max = 1.0): string {
  const bars = series
    .map((d) => {
      const pct = max > 0 ? Math.round((d.value / max) * 100) : 0;
      return (
        `<div class="bar-cell"><div class="bar" data-value="${d.value}" style="height:${pct}%"></div>` +
        `<div class="bar-value">${d.value.toFixed(2)}</div>` +
        `<div class="bar-label">${escapeHtml(d.label)}</div></div>`
      );
    })
    .join("");
  return `<section class="chart"><h3>${escapeHtml(title)}</h3><div class="bars">${bars}</div></section>`;
}

function failureChartHtml(counts: FailureCounts): string {
  const entries: BarDatum[] = [
    { label: "hallucinations", value: counts.hallucination },
    { label: "omissions", value: counts.omission },
    { label: "processing failures", value: counts.processing_failure },
  ];
  const max = Math.max(1, ...entries.map((e) => e.value));
  const bars = entries
    .map((d) => {
      const pct = Math.round((d.value / max) * 100);
      return (
        `<div class="bar-cell"><div class="bar failure" data-count="${d.value}" style="height:${pct}%"></div>` +
        `<div class="bar-value">${d.value}</div>` +
        `<div class="bar-label">${escapeHtml(d.label)}</div></div>`
      );
    })
    .join("");
  return `<section class="chart"><h3>Failure modes</h3><div class="bars">${bars}</div></section>`;
}

function efficiencyTableHtml(block: TokenEfficiencyBlock | null): string {
  if (!block) {
    return '<section class="chart"><h3>Token efficiency</h3><p>No correct answers; efficiency undefined.</p></section>';
  }
  const rows: Array<[string, string]> = [
    ["Total cost (microUSD)", block.total_cost_microusd.toFixed(2)],
    ["Correct answers", String(block.correct_count)],
    ["Cost per correct", block.cost_per_correct.toFixed(2)],
    ["Raw efficiency", block.raw_efficiency.toFixed(3)],
  ];
  const body = rows
    .map(([k, v]) => `<tr><td>${escapeHtml(k)}</td><td class="num">${escapeHtml(v)}</td></tr>`)
    .join("");
  return `<section class="chart"><h3>Token efficiency</h3><table class="efficiency">${body}</table></section>`;
}

export function renderDashboardHtml(view: DashboardView): string {
  const header =
    `<h2>Report ${escapeHtml(view.reportId)}</h2>` +
    `<p class="summary">backend ${escapeHtml(view.backendId)} &middot; ` +
    `overall accuracy <strong data-overall="${view.overallAccuracy}">${view.overallAccuracy.toFixed(3)}</strong></p>`;
  return (
    header +
    barChartHtml("Accuracy by batch", view.batchSeries) +
    barChartHtml("Accuracy by question type", view.qtypeSeries) +
    failureChartHtml(view.failureCounts) +
    efficiencyTableHtml(view.efficiency)
  );
}

export function notFoundHtml(reportId: string): string {
  return `<div class="panel not-found">No report named <code>${escapeHtml(reportId)}</code>.</div>`;
}
