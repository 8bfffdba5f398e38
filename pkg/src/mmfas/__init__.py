"""Multi-modal (RGB / depth / IR) face anti-spoofing for low-quality crops.

Modules: ``depth_prep`` (depth normalization, IR quantization, cropping),
``quality`` (degradation, PSNR/SSIM), ``afa_net`` (the network),
``losses`` and ``metrics`` (objective, PAD error rates, ROC),
``dataset_io`` (manifests, synthetic data), ``train`` (training harness),
``checkpoint`` and ``imageio`` (file formats), ``cli`` (command line).
"""

__version__ = "0.1.0"
