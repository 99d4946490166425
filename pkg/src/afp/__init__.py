"""Average-field-Pauli (Chern-Simons-Schroedinger) energy functional for the
almost-bosonic anyon gas: evaluation, minimization, exact self-dual solitons
and the critical coupling gamma*(beta)."""

__version__ = "0.1.0"
