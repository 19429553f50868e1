"""Event-driven billiard simulation on infinite lattice tables: rectangle
scatterer (wind-tree) and disk scatterer (Lorentz gas) models, ring-section
first-return statistics, and exact periodic-orbit detection."""

__version__ = "0.1.0"
