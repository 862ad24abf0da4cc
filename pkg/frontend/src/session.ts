import type { PinnedSetup, Setup } from "./types";

export const MAX_PINNED = 8;

const SETUP_BOUNDS: Record<keyof Setup, [number, number]> = {
  muR2: [1e-6, 1 - 1e-6],
  phiR2: [1e-6, 1e6],
  aPi: [1e-6, 1e6],
  p: [1, 100000],
  K: [0, 50],
  L: [1, 100000],
  N: [1, 10000000],
};

export function validateSetup(setup: Setup): string[] {
  const problems: string[] = [];
  for (const key of Object.keys(SETUP_BOUNDS) as (keyof Setup)[]) {
    const [lo, hi] = SETUP_BOUNDS[key];
    const value = setup[key];
    if (!Number.isFinite(value) || value < lo || value > hi) {
      problems.push(`${key} must be in [${lo}, ${hi}]`);
    }
  }
  return problems;
}

/** Current hyperparameters plus up to eight immutable pinned comparisons. */
export class ElicitationSession {
  private current: Setup;
  private pins: PinnedSetup[] = [];
  private nextId = 1;

  constructor(initial?: Partial<Setup>) {
    this.current = {
      muR2: 0.5, phiR2: 1.0, aPi: 0.5,
      p: 10, K: 1, L: 20, N: 200,
      ...initial,
    };
  }

  get setup(): Readonly<Setup> {
    return { ...this.current };
  }

  get pinned(): readonly PinnedSetup[] {
    return this.pins.slice();
  }

  update(change: Partial<Setup>): string[] {
    const candidate = { ...this.current, ...change };
    const problems = validateSetup(candidate);
    if (problems.length === 0) {
      this.current = candidate;
    }
    return problems;
  }

  pin(label?: string): PinnedSetup {
    if (this.pins.length >= MAX_PINNED) {
      throw new Error(`at most ${MAX_PINNED} setups can be pinned`);
    }
    const id = this.nextId++;
    const pinned: PinnedSetup = {
      id,
      label: label ?? `setup ${id}`,
      setup: Object.freeze({ ...this.current }),
    };
    this.pins.push(pinned);
    return pinned;
  }

  unpin(id: number): void {
    this.pins = this.pins.filter((p) => p.id !== id);
  }

  get canExport(): boolean {
    return validateSetup(this.current).length === 0;
  }

  /** Model-config fragment directly consumable by the fit command's --config. */
  exportFragment(): string {
    const s = this.current;
    const fragment = {
      hyperparameters: {
        mu_r2: s.muR2,
        phi_r2: s.phiR2,
        a_pi: s.aPi,
      },
      design_summary: { p: s.p, K: s.K, L: s.L, N: s.N },
    };
    return JSON.stringify(fragment, null, 2);
  }

  /** Restore from an exported fragment; round-trips exactly. */
  importFragment(text: string): string[] {
    let parsed: {
      hyperparameters?: { mu_r2?: number; phi_r2?: number; a_pi?: number };
      design_summary?: { p?: number; K?: number; L?: number; N?: number };
    };
    try {
      parsed = JSON.parse(text);
    } catch {
      return ["fragment is not valid JSON"];
    }
    const h = parsed.hyperparameters;
    const d = parsed.design_summary;
    if (!h || typeof h.mu_r2 !== "number" || typeof h.phi_r2 !== "number") {
      return ["fragment lacks hyperparameters.mu_r2 / phi_r2"];
    }
    return this.update({
      muR2: h.mu_r2,
      phiR2: h.phi_r2,
      aPi: typeof h.a_pi === "number" ? h.a_pi : this.current.aPi,
      ...(d ? { p: d.p ?? this.current.p, K: d.K ?? this.current.K,
                L: d.L ?? this.current.L, N: d.N ?? this.current.N } : {}),
    });
  }
}
