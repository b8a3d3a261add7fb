"""Layer 1 — Interface: experiment suite + command line"""
