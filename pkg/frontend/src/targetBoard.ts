// Target board: every debuggable target with its privilege badge, plus one
// banner per extension whose debugger infobar is visible.

import type { ApiClient } from "./api.js";
import { badgeClass, classifyBadge } from "./badges.js";
import type { InfobarState, TargetInfo } from "./types.js";

export function renderTargetBoard(
  container: HTMLElement,
  targets: TargetInfo[],
  infobars: Record<string, InfobarState>,
  api: ApiClient,
  onCancelled?: (extensionId: string, detached: number) => void,
): void {
  container.replaceChildren();
  const heading = document.createElement("h2");
  heading.textContent = "Targets";
  container.appendChild(heading);

  for (const infobar of Object.values(infobars)) {
    if (!infobar.visible) continue;
    const banner = document.createElement("div");
    banner.className = "infobar-banner";
    banner.dataset.extensionId = infobar.extensionId;

    const text = document.createElement("span");
    text.textContent =
      `"${infobar.extensionId.slice(0, 8)}…" is debugging ` +
      `${infobar.attachedTargets.length} target(s)`;
    banner.appendChild(text);

    const cancel = document.createElement("button");
    cancel.textContent = "Cancel";
    cancel.className = "infobar-cancel";
    cancel.addEventListener("click", () => {
      cancel.disabled = true;
      void api
        .cancelInfobar(infobar.extensionId)
        .then((result) => onCancelled?.(result.extensionId, result.detached))
        .finally(() => {
          cancel.disabled = false;
        });
    });
    banner.appendChild(cancel);
    container.appendChild(banner);
  }

  const list = document.createElement("ul");
  list.className = "target-list";
  for (const target of targets) {
    const row = document.createElement("li");
    row.className = "target";
    row.dataset.targetId = target.targetId;

    const badge = document.createElement("span");
    const kind = classifyBadge(target.url, target.targetId);
    badge.className = badgeClass(kind);
    badge.textContent = kind;
    row.appendChild(badge);

    const label = document.createElement("span");
    label.className = "target-label";
    const flags = [
      target.incognito ? "incognito" : null,
      target.attached > 0 ? `${target.attached} attached` : null,
    ]
      .filter(Boolean)
      .join(", ");
    label.textContent = `${target.targetId}  ${target.title || target.url}${flags ? `  (${flags})` : ""}`;
    row.appendChild(label);

    list.appendChild(row);
  }
  container.appendChild(list);
}
