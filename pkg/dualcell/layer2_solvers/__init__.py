"""Layer 2 — Solvers: leapfrog dynamics, CFL estimation, discrete spectra"""
