"""Layer 4 — Geometry: primal triangulation, barycentric dual, micro-cell maps"""
