/** Parser for the solver's plain-text report (solve.txt in a run dir).
 *
 * The report is the authority for reference lines: worst-equilibrium
 * total, optimum total, and the equilibrium disparity. Example lines:
 *
 *   worst equilibrium: total cost 400 (400)
 *   social optimum: total cost 300 (300)
 *   disparity S1-S2 at worst equilibrium: +0
 */

import { DataError, SolveReport } from "./types";

const NE_RE = /^worst equilibrium: total cost ([-+\d.eE]+)/m;
const SO_RE = /^social optimum: total cost ([-+\d.eE]+)/m;
const SD_RE = /^disparity \S+ at worst equilibrium: ([-+][\d.eE+-]*)$/m;

function matchNumber(text: string, re: RegExp, what: string, where: string): number {
  const m = re.exec(text);
  if (!m) {
    throw new DataError(`${where}: could not find ${what} line`);
  }
  const value = Number(m[1]);
  if (Number.isNaN(value)) {
    throw new DataError(`${where}: ${what} value ${m[1]!} is not numeric`);
  }
  return value;
}

export function parseSolveReport(text: string, where: string): SolveReport {
  return {
    neTotal: matchNumber(text, NE_RE, "worst-equilibrium cost", where),
    soTotal: matchNumber(text, SO_RE, "optimum cost", where),
    equilibriumSd: matchNumber(text, SD_RE, "equilibrium disparity", where),
  };
}
