"""How fast does the particle cloud approach the limit law as N grows?

Each N is simulated for a set of independent replicas and compared with a
large reference cloud by the exact quadratic transport cost.  The
log-log slope of the mean cost against N is the empirical rate.

Run:  python3 demos/particle_number.py
"""

from nanbu import KernelSpec, Maxwellian
from nanbu.harness import ScanConfig, fit_rows, run_epsilon_scan, run_n_scan

if __name__ == "__main__":
    sampling = ScanConfig(N_list=(16, 32, 64, 128, 256), replicas=30, reference_ratio=8,
                          initial=Maxwellian(1.0), seed=4)
    rows, _ = run_epsilon_scan(sampling)
    fit = fit_rows(rows, "epsilonN", "N")
    print("i.i.d. Gaussian samples against a fresh large sample")
    for r in rows:
        print(f"  N={r.N:5d}  W2^2 {r.value:.4f} +- {r.stderr:.4f}")
    print(f"  slope {fit['slope']:.3f} (the general 3D bound gives -1/3)\n")

    cfg = ScanConfig(kernel=KernelSpec.maxwell(0.5), N_list=(32, 64, 128, 256), K_list=(16.0,),
                     horizon=1.0, replicas=30, N_ref=2048, seed=5)
    rows, info = run_n_scan(cfg)
    fit = fit_rows(rows, "w2sq_to_ref", "N")
    print("particle system at T=1 against a reference run with N_ref=2048")
    for r in sorted((r for r in rows if r.statistic == "w2sq_to_ref"), key=lambda r: r.N):
        print(f"  N={r.N:5d}  W2^2 {r.value:.4f} +- {r.stderr:.4f}")
    print(f"  slope {fit['slope']:.3f}, Spearman {fit['spearman']:.2f}, reference reliable: {info['reliable']}")
