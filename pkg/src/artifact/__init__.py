"""Monodromy data of irregular connections and dynamical r-matrix checks."""
