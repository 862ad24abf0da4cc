/** Shapes of the /api/v1 payloads and the elicitation session state. */

export interface DensityGrid {
  x: number[];
  density: number[];
}

export interface KappaGrid extends DensityGrid {
  mean: number;
}

export interface MeffResult {
  quantiles: { q05: number; q25: number; median: number; q75: number; q95: number };
  mean: number;
  total_coefficients: number;
  histogram: { counts: number[]; edges: number[] };
}

export interface FieldError {
  field: string;
  message: string;
}

/** Hyperparameters the user elicits, plus the design summary they describe. */
export interface Setup {
  muR2: number;
  phiR2: number;
  aPi: number;
  p: number;
  K: number;
  L: number;
  N: number;
}

export interface PinnedSetup {
  readonly id: number;
  readonly label: string;
  readonly setup: Readonly<Setup>;
}

export interface PanelPayloads {
  r2: DensityGrid;
  tau2: DensityGrid;
  marginal: DensityGrid;
  kappa: KappaGrid;
  meff: MeffResult;
  /** Checksum of each raw response body, keyed by panel. */
  checksums: Record<string, string>;
}
