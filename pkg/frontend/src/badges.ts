// Privilege badges for the target board, mirroring the server's URL classes.

export type Badge =
  | "Regular"
  | "File"
  | "Interstitial"
  | "WebUI"
  | "Extension"
  | "Browser"
  | "Unknown";

export function classifyBadge(url: string, targetId: string): Badge {
  if (targetId === "browser") return "Browser";
  if (url === "about:blank") return "Regular";
  const colon = url.indexOf(":");
  if (colon <= 0) return "Unknown";
  const scheme = url.slice(0, colon).toLowerCase();
  switch (scheme) {
    case "http":
    case "https":
      return "Regular";
    case "file":
      return "File";
    case "chrome-error":
      return "Interstitial";
    case "chrome":
      return "WebUI";
    case "chrome-extension":
      return "Extension";
    default:
      return "Unknown";
  }
}

const BADGE_CLASSES: Record<Badge, string> = {
  Regular: "badge badge-regular",
  File: "badge badge-file",
  Interstitial: "badge badge-interstitial",
  WebUI: "badge badge-webui",
  Extension: "badge badge-extension",
  Browser: "badge badge-browser",
  Unknown: "badge badge-unknown",
};

export function badgeClass(badge: Badge): string {
  return BADGE_CLASSES[badge];
}
