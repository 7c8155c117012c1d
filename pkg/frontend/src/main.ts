import { ApiClient, ApiError } from "./api.js";
import { canSend, ChatSession, renderEntryHtml } from "./chat.js";
import { buildDashboard, notFoundHtml, renderDashboardHtml } from "./dashboard.js";

declare global {
  interface Window {
    VULNQA_API_BASE?: string;
  }
}

const api = new ApiClient(window.VULNQA_API_BASE ?? "");
const session = new ChatSession(api);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const chatLog = el<HTMLDivElement>("chat-log");
const chatInput = el<HTMLInputElement>("chat-input");
const chatSend = el<HTMLButtonElement>("chat-send");
const chatBackend = el<HTMLInputElement>("chat-backend");
const evalBackend = el<HTMLInputElement>("eval-backend");
const evalSeed = el<HTMLInputElement>("eval-seed");
const evalRun = el<HTMLButtonElement>("eval-run");
const evalLoad = el<HTMLButtonElement>("eval-load");
const evalReportId = el<HTMLInputElement>("eval-report-id");
const evalStatus = el<HTMLSpanElement>("eval-status");
const dashboard = el<HTMLDivElement>("dashboard");
const healthLine = el<HTMLSpanElement>("health");

function renderChat(): void {
  chatLog.innerHTML = session.entries.map(renderEntryHtml).join("");
  chatLog.scrollTop = chatLog.scrollHeight;
}

function syncSendEnabled(): void {
  chatSend.disabled = !canSend(chatInput.value);
}

async function handleSend(): Promise<void> {
  const question = chatInput.value;
  if (!canSend(question)) return;
  chatInput.value = "";
  syncSendEnabled();
  await session.send(question, chatBackend.value.trim() || undefined);
  renderChat();
}

chatInput.addEventListener("input", syncSendEnabled);
chatInput.addEventListener("keydown", (event) => {
  if (event.key === "Enter" && canSend(chatInput.value)) {
    void handleSend().then(renderChat);
  }
});
chatSend.addEventListener("click", () => void handleSend());
syncSendEnabled();

function showReport(reportId: string, report: Parameters<typeof buildDashboard>[1]): void {
  dashboard.innerHTML = renderDashboardHtml(buildDashboard(reportId, report));
}

async function handleRun(): Promise<void> {
  const backend = evalBackend.value.trim();
  const seed = Number(evalSeed.value);
  if (!backend || !Number.isFinite(seed)) {
    evalStatus.textContent = "backend and seed required";
    return;
  }
  evalStatus.textContent = "starting...";
  try {
    const { report_id } = await api.runEval(backend, seed);
    evalReportId.value = report_id;
    evalStatus.textContent = `running ${report_id}...`;
    const report = await api.pollReport(report_id);
    evalStatus.textContent = "done";
    showReport(report_id, report);
  } catch (err) {
    if (err instanceof ApiError && err.kind === "run_in_progress") {
      evalStatus.textContent = "run in progress";
    } else if (err instanceof ApiError) {
      evalStatus.textContent = `error: ${err.kind}`;
    } else {
      evalStatus.textContent = `error: ${String(err)}`;
    }
  }
}

async function handleLoad(): Promise<void> {
  const reportId = evalReportId.value.trim();
  if (!reportId) return;
  try {
    showReport(reportId, await api.report(reportId));
    evalStatus.textContent = "loaded";
  } catch (err) {
    if (err instanceof ApiError && err.kind === "report_not_found") {
      dashboard.innerHTML = notFoundHtml(reportId);
      evalStatus.textContent = "not found";
    } else {
      evalStatus.textContent = `error: ${String(err)}`;
    }
  }
}

evalRun.addEventListener("click", () => void handleRun());
evalLoad.addEventListener("click", () => void handleLoad());

void api
  .health()
  .then((h) => {
    healthLine.textContent = `ready: ${h.corpus_records} records, index ${h.index_rows} rows, v${h.version}`;
  })
  .catch(() => {
    healthLine.textContent = "service unavailable";
  });
