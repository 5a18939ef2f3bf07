"""GAN training toolkit with a dense-block perceptual discriminator.

The discriminator reuses the first dense block of an ImageNet-pretrained
classifier as its feature extractor and thaws it progressively while the
adversarial game runs. Task pipelines cover single-image super-resolution,
paired translation, and unpaired translation with cycle consistency.
"""

__version__ = "0.1.0"
