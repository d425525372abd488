"""
Data layer: matrices, CSV I/O, normalization, synthetic generators, amputation.

- dataset: DataMatrix, load/write CSV, min-max normalization, column statistics,
  bundled datasets (geyser.csv: Old Faithful eruption duration and waiting time, 272 rows)
- synthetic: registry of 2D shapes and the Gaussian mixture
- missingness: Full MCAR / MCAR / MAR / MNAR mask injection
"""
