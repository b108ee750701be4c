"""Limited-angle sinogram completion by guided mean-reverting diffusion.

Subpackage map:

    tomo          projection operators, masks, measurement noise
    mrsde         forward/reverse diffusion chain and schedules
    score_models  analytic, oracle, and fitted clean-state estimators
    rectify       measured-row rectification and guided reconstruction
    phantoms      synthetic images, acquisition simulation, datasets
    metrics       PSNR / SSIM / residuals / paired statistics
    arrayio       binary array container and PGM/PNG export
    cli           command-line pipeline (simulate, reconstruct, eval, sweep)
"""

__version__ = "0.1.0"

from . import arrayio, metrics, mrsde, phantoms, rectify, score_models, tomo

__all__ = [
    "arrayio",
    "metrics",
    "mrsde",
    "phantoms",
    "rectify",
    "score_models",
    "tomo",
    "__version__",
]
