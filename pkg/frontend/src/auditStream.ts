// Live audit table: strict seq order, violation highlighting, gap markers.

import type { AuditRecord } from "./types.js";

export interface AuditFilter {
  extensionId?: string;
  action?: string;
}

export function matchesFilter(record: AuditRecord, filter: AuditFilter): boolean {
  if (filter.extensionId && record.extensionId !== filter.extensionId) return false;
  if (filter.action && !record.action.startsWith(filter.action)) return false;
  return true;
}

export function renderAuditStream(
  container: HTMLElement,
  records: AuditRecord[],
  gapsAfter: number[],
  filter: AuditFilter = {},
): void {
  container.replaceChildren();
  const heading = document.createElement("h2");
  heading.textContent = "Audit stream";
  container.appendChild(heading);

  const table = document.createElement("table");
  table.className = "audit";
  const head = document.createElement("tr");
  for (const column of ["seq", "extension", "action", "target", "decision", "violations"]) {
    const cell = document.createElement("th");
    cell.textContent = column;
    head.appendChild(cell);
  }
  table.appendChild(head);

  const gaps = new Set(gapsAfter);
  for (const record of records) {
    if (!matchesFilter(record, filter)) continue;
    const row = document.createElement("tr");
    row.className = record.violatedSRs.length > 0 ? "audit-row violated" : "audit-row";
    if (record.violatedSRs.length > 0) {
      row.dataset.srs = record.violatedSRs.join(",");
    }

    const cells = [
      String(record.seq),
      record.extensionId.slice(0, 8) + "…",
      record.action,
      record.targetId ?? "—",
      record.decision.outcome === "allow" ? "allow" : `deny (${record.decision.reason})`,
      record.violatedSRs.join(" ") || "—",
    ];
    for (const text of cells) {
      const cell = document.createElement("td");
      cell.textContent = text;
      row.appendChild(cell);
    }
    table.appendChild(row);

    if (gaps.has(record.seq)) {
      const marker = document.createElement("tr");
      marker.className = "audit-gap";
      const cell = document.createElement("td");
      cell.colSpan = 6;
      cell.textContent = "⚠ missed records";
      marker.appendChild(cell);
      table.appendChild(marker);
    }
  }
  container.appendChild(table);
}
