"""DualCell 2D — mass-lumped dual cell solver for Maxwell (TM) and acoustic waves"""
__version__ = "1.0.0"
