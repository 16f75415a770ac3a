"""
Recovering one dictionary-sparse signal from sign bits
======================================================

Draw a random tight frame, build a signal whose analysis coefficients are
supported on a random set, take 8000 one-bit measurements in 8 adaptive
stages and watch the error shrink stage by stage.
"""

import numpy as np

from adaptive_onebit import (
    MeasurementEnsemble,
    RngStream,
    SparseSignalSpec,
    adaptive_recover,
    adaptive_sample,
    effective_sparsity,
    exact_sparse_signal,
    gaussian_matrix,
    random_tight_dictionary,
)
from adaptive_onebit.dictionaries import random_support

root = RngStream(2024)
n, N, support_size = 32, 64, 35

# 64 atoms in R^32; with 35 active coefficients the signal lives in a 3-dimensional subspace
D = random_tight_dictionary(n, N, root.child(1))
f = exact_sparse_signal(D, SparseSignalSpec(random_support(N, support_size, root.child(2)), root.child(3)))
print(f"effective sparsity of f: {effective_sparsity(f, D.matrix):.1f}")

r = 2.0 * np.linalg.norm(f)
A = gaussian_matrix(8000, n, root.child(4))

for T in (1, 8):
    ens = MeasurementEnsemble(A, T)
    record, _ = adaptive_sample(ens, f, D, r, support_size, T, root.child(5))
    # the recoverer sees only A, D and the stored bits/thresholds
    f_hat, trace = adaptive_recover(ens, D, record, r, support_size, T)
    errs = trace.errors(f) / np.linalg.norm(f)
    print(f"T={T}: {record.q} bits per stage, normalized error per stage:")
    print("   ", " ".join(f"{e:.2e}" for e in errs))
