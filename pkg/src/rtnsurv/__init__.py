"""Dynamic survival analysis for incident return-to-normal duration prediction.

A library + CLI covering the full workflow: synthetic corpus generation,
seasonal-baseline incident labeling, static and dynamically updated
duration-distribution models (Cox, AFT, random survival forest, hitting-time
networks), a dynamic evaluation harness, and Shapley-value attribution.
"""

__version__ = "0.1.0"
