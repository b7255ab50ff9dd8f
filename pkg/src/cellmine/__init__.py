"""cellmine: batch analysis of cellular-tower traffic patterns.

Pipeline stages: ingest session logs into 10-minute bins, build normalized
traffic vectors, cluster them into patterns, characterize the patterns in the
time and frequency domains, decompose arbitrary towers into convex mixtures of
the four primary patterns, and validate against points-of-interest data.
"""

__version__ = "0.1.0"
