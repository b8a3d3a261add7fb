"""Layer 3 — Discretization: LGR quadrature, dual/primal spaces, lumped assembly"""
