import type { DensityGrid, FieldError, KappaGrid, MeffResult, PanelPayloads, Setup } from "./types";
import { fnv1a } from "./checksum";

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    public readonly fieldErrors: FieldError[],
  ) {
    super(fieldErrors.map((e) => `${e.field}: ${e.message}`).join("; ") || `HTTP ${status}`);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "http://127.0.0.1:8645",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request(path: string, init: RequestInit | undefined, signal?: AbortSignal) {
    let res: Response;
    try {
      res = await this.fetchImpl(`${this.baseUrl}${path}`, { ...init, signal });
    } catch (err) {
      if ((err as Error).name === "AbortError") throw err;
      throw new ServiceError(0, [{ field: "service", message: "service unreachable" }]);
    }
    const text = await res.text();
    if (!res.ok) {
      let fields: FieldError[] = [];
      try {
        const body = JSON.parse(text);
        if (Array.isArray(body.detail)) {
          fields = body.detail.map((d: Record<string, string>) => ({
            field: d.field ?? String(d.loc?.at(-1) ?? "request"),
            message: d.message ?? d.msg ?? "invalid value",
          }));
        }
      } catch {
        /* non-JSON error body; fall through with the bare status */
      }
      throw new ServiceError(res.status, fields);
    }
    return { body: JSON.parse(text), checksum: fnv1a(text) };
  }

  async health(signal?: AbortSignal): Promise<Record<string, string>> {
    return (await this.request("/api/v1/health", undefined, signal)).body;
  }

  async r2Grid(s: Setup, signal?: AbortSignal) {
    const q = `mu=${s.muR2}&phi=${s.phiR2}`;
    const { body, checksum } = await this.request(`/api/v1/prior/r2?${q}`, undefined, signal);
    return { grid: body as DensityGrid, checksum };
  }

  async tau2Grid(s: Setup, signal?: AbortSignal) {
    const q = `mu=${s.muR2}&phi=${s.phiR2}`;
    const { body, checksum } = await this.request(`/api/v1/prior/tau2?${q}`, undefined, signal);
    return { grid: body as DensityGrid, checksum };
  }

  async marginalGrid(s: Setup, signal?: AbortSignal) {
    const q = `mu=${s.muR2}&phi=${s.phiR2}&api=${s.aPi}`;
    const { body, checksum } = await this.request(`/api/v1/prior/marginal?${q}`, undefined, signal);
    return { grid: body as DensityGrid, checksum };
  }

  async kappaGrid(s: Setup, signal?: AbortSignal) {
    // Balanced design summary: r = N, phi component = 1/(p + K + p*K).
    const phicomp = 1.0 / (s.p + s.K + s.p * s.K);
    const q = `mu=${s.muR2}&phi=${s.phiR2}&r=${s.N}&phicomp=${phicomp}`;
    const { body, checksum } = await this.request(`/api/v1/prior/kappa?${q}`, undefined, signal);
    return { grid: body as KappaGrid, checksum };
  }

  async meff(s: Setup, seed = 0, signal?: AbortSignal) {
    const payload = {
      mu: s.muR2, phi: s.phiR2, api: s.aPi,
      p: s.p, K: s.K, L: s.L, N: s.N, seed,
    };
    const { body, checksum } = await this.request("/api/v1/prior/meff", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    }, signal);
    return { result: body as MeffResult, checksum };
  }

  /** Fetch all four linked panels for one setup. */
  async panels(s: Setup, seed = 0, signal?: AbortSignal): Promise<PanelPayloads> {
    const [r2, tau2, marginal, kappa, meff] = await Promise.all([
      this.r2Grid(s, signal),
      this.tau2Grid(s, signal),
      this.marginalGrid(s, signal),
      this.kappaGrid(s, signal),
      this.meff(s, seed, signal),
    ]);
    return {
      r2: r2.grid,
      tau2: tau2.grid,
      marginal: marginal.grid,
      kappa: kappa.grid,
      meff: meff.result,
      checksums: {
        r2: r2.checksum,
        tau2: tau2.checksum,
        marginal: marginal.checksum,
        kappa: kappa.checksum,
        meff: meff.checksum,
      },
    };
  }
}
