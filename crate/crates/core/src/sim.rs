//! Experiment harnesses and metrics.
