"""Neural-network traffic classifiers over exported tensor files.

CNN, stacked-LSTM, and stacked-autoencoder architectures with named presets,
seeded training with early stopping, and softmax probability export. All
data crosses the package boundary as files (TensorFile in, ProbFile out).
"""

__version__ = "0.1.0"
