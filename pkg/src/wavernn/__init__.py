"""Wave-RNN: simple RNNs with circular-convolution recurrence, baselines, tasks and wave diagnostics."""

__version__ = "0.1.0"
