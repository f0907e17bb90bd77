"""Structure-aware offline alignment of music performances to scores.

Pipeline: MIDI/WAV ingestion -> chroma feature sequences -> cross-similarity
matrices -> inflection-point prediction with a dilated CNN -> jump-extended
DTW alignment -> beat-level accuracy reports.
"""

__version__ = "0.1.0"
