"""Learning a shared transformation space from unpaired image collections,
then reusing it: extract a direction from two images, scale it, mask it by
layer, compose several, and deploy the result on generated or real images.
"""

__version__ = "0.1.0"

from .codes import (
    DEFAULT_K,
    DEFAULT_T_DIM,
    DEFAULT_Z_DIM,
    LatentCode,
    TransformationCode,
    TransformationDirection,
    apply_direction,
    codes_from_seed,
    compose_directions,
    direction_between,
    direction_from_dict,
    direction_to_dict,
    load_direction,
    sample_latent,
    sample_transformation,
    save_direction,
)
from .networks import Discriminator, Generator, NetConfig, adain
from .objectives import LossReport, adv_loss_discriminator, adv_loss_generator, mi_loss

__all__ = [
    "DEFAULT_K",
    "DEFAULT_T_DIM",
    "DEFAULT_Z_DIM",
    "LatentCode",
    "TransformationCode",
    "TransformationDirection",
    "apply_direction",
    "codes_from_seed",
    "compose_directions",
    "direction_between",
    "direction_from_dict",
    "direction_to_dict",
    "load_direction",
    "sample_latent",
    "sample_transformation",
    "save_direction",
    "Discriminator",
    "Generator",
    "NetConfig",
    "adain",
    "LossReport",
    "adv_loss_discriminator",
    "adv_loss_generator",
    "mi_loss",
    "__version__",
]
