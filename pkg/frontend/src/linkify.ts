// CVE-ID linkification. stripCveAnchors(linkifyCveIds(s)) === s for every
// string s, so linkification never alters non-CVE text.

export const CVE_ID_PATTERN = /CVE-\d{4}-\d{4,}/g;

export const NVD_DETAIL_BASE = "https://nvd.nist.gov/vuln/detail/";

const ESCAPES: Array<[string, string]> = [
  ["&", "&amp;"],
  ["<", "&lt;"],
  [">", "&gt;"],
  ['"', "&quot;"],
  ["'", "&#39;"],
];

export function escapeHtml(text: string): string {
  let out = text;
  for (const [raw, entity] of ESCAPES) {
    out = out.split(raw).join(entity);
  }
  return out;
}

export function unescapeHtml(html: string): string {
  let out = html;
  // Reverse order so &amp; is unmapped last.
  for (const [raw, entity] of [...ESCAPES].reverse()) {
    out = out.split(entity).join(raw);
  }
  return out;
}

/** Escape the text for HTML and wrap every CVE ID in an NVD detail anchor. */
export function linkifyCveIds(text: string): string {
  // CVE IDs contain no HTML-escapable characters, so matching after
  // escaping is safe.
  return escapeHtml(text).replace(
    CVE_ID_PATTERN,
    (id) =>
      `<a class="cve-link" href="${NVD_DETAIL_BASE}${id}" target="_blank" rel="noopener">${id}</a>`,
  );
}

const CVE_ANCHOR_RE =
  /<a class="cve-link" href="[^"]*" target="_blank" rel="noopener">([^<]*)<\/a>/g;

/** Inverse of linkifyCveIds: drop the anchors, keep their text, unescape. */
export function stripCveAnchors(html: string): string {
  return unescapeHtml(html.replace(CVE_ANCHOR_RE, "$1"));
}

export function countCveAnchors(html: string): number {
  return [...html.matchAll(CVE_ANCHOR_RE)].length;
}
