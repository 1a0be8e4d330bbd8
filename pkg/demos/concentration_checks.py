"""Empirical window-concentration checks for stochastic participation.

Independent sampling admits a Hoeffding bound on how far a client's
P-round averaged weight can drift from 1/N; Markov availability needs
the Chebyshev bound with the long-run variance of the chain.
"""

import fedamp as fa

hf = fa.hoeffding_check(fa.PatternSpec("independent", S=4), N=16, P=64,
                        c=0.05, trials=5000, seed=1)
print(f"independent sampling, P={hf.P}: threshold {hf.threshold:.4f}, "
      f"violation rate {hf.violation_rate:.4f} (allowed {hf.c}), "
      f"pass={hf.passed}")

spec = fa.PatternSpec("markov", S=4, p_aa=0.9, p_uu=0.8)
mix = fa.chebyshev_mixing_check(spec, N=16, P_list=[16, 64, 256, 1024],
                                trials=150, seed=2)
print(f"\nmarkov availability: Var(qbar) slope vs P = {mix.slope:.3f} "
      f"(independent-like mixing gives -1)")
print(f"per-lag covariance decay {mix.cov_ratio:.3f} "
      f"(chain memory p_aa + p_uu - 1 = 0.7)")
print(f"long-run variance estimate {mix.upsilon_hat2:.5f}, "
      f"truncated at lag {mix.truncation_lag}")
for bc in mix.chebyshev:
    print(f"  P={bc.P:>5}: violation rate {bc.violation_rate:.4f} "
          f"<= {bc.c} -> pass={bc.passed}")

# the fitted long-run variance feeds the amplification-interval chooser
P, clamped = fa.choose_amplification_interval(mix.upsilon_hat2, N=16, I=5,
                                              T=4096)
print(f"\nsuggested amplification interval: P={P} (clamped={clamped})")
