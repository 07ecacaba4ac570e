from fatsim.augment.mixup import MixupPair, intensity_shift, mixup, pseudo_label, sample_lambda

__all__ = ["MixupPair", "intensity_shift", "mixup", "pseudo_label", "sample_lambda"]
