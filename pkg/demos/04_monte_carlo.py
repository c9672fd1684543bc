"""Short Monte Carlo run for one scenario config, with and without DGs.

Reports the missed- and false-detection probabilities, the mean angle
error and the worst per-phase voltage RMSE.
"""

from pathlib import Path

from pmu_gsa import load_config, run_montecarlo

configs = Path(__file__).resolve().parent.parent / "configs"
for name in ("scen3.json", "scen3_dg.json"):
    cfg = load_config(configs / name)
    records, agg = run_montecarlo(cfg, n_trials=5)
    s = agg.summary()
    print(f"{name}: PMD={s['PMD']} PFD={s['PFD']} epsilon={s['epsilon']:.4f} rad "
          f"failed={s['failed']} worst dV={max(v for v in s['rmse_corrected']['delta_v_max'] if v is not None):.2e}")
