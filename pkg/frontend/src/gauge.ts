/**
 * Presentation helpers for the certainty gauge and verdict screens.
 *
 * The service is the single source of truth for every number shown here:
 * the band comes from the verdict string the server sent, the zone edges
 * come from the cut-off pair in the session view, and the summary line is
 * assembled verbatim from server fields.  Nothing in this module compares
 * a degree against a threshold or combines certainty values.
 */

import type { Cutoff, DiagnosisView, SessionView } from "./api.js";

export type Band = "negative" | "examine" | "positive" | "none";

/** Map the server's verdict string to a display band. */
export function bandForVerdict(verdict: string, noEvidence: boolean): Band {
  if (noEvidence) {
    return "none";
  }
  switch (verdict) {
    case "NEGATIVE":
      return "negative";
    case "NEEDS_EXAMINATION":
      return "examine";
    case "POSITIVE":
      return "positive";
    default:
      return "none";
  }
}

export const BAND_COLORS: Record<Band, string> = {
  negative: "#4caf50",
  examine: "#ff9800",
  positive: "#e53935",
  none: "#9e9e9e",
};

export const BAND_LABELS: Record<Band, string> = {
  negative: "below the negative cut-off",
  examine: "between the cut-offs — needs examination",
  positive: "at or above the positive cut-off",
  none: "no evidence",
};

export interface GaugeGeometry {
  /** Left edge of the needs-examination zone, percent of gauge width. */
  tndPercent: number;
  /** Left edge of the positive zone, percent of gauge width. */
  tpdPercent: number;
}

/** Zone edges for a horizontal 0–100 gauge, straight from the cut-off pair. */
export function gaugeGeometry(cutoff: Cutoff): GaugeGeometry {
  return { tndPercent: cutoff.tnd * 100, tpdPercent: cutoff.tpd * 100 };
}

/** Needle position for the current degree, or null while there is none. */
export function degreeMarkerPercent(degree: number | null): number | null {
  return degree === null ? null : degree * 100;
}

export function progressLabel(answered: number, total: number): string {
  return `${answered} / ${total}`;
}

/**
 * The one-line result, identical to what the command-line front end prints.
 */
export function verdictSummary(diagnosis: DiagnosisView): string {
  if (diagnosis.no_evidence) {
    return `${diagnosis.anomaly}: insufficient evidence ${diagnosis.verdict}`;
  }
  return `${diagnosis.anomaly}: ${diagnosis.display_percent}% ${diagnosis.verdict}`;
}

/** Band for the live preview shown while the interview is still running. */
export function previewBand(view: SessionView): Band {
  return bandForVerdict(view.verdict_preview, view.no_evidence);
}
