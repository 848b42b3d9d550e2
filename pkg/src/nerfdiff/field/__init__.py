"""Neural radiance field: cameras, rays, encoding, sampling, compositing, training."""

from nerfdiff.field.camera import Camera, fibonacci_sphere, generate_ray, generate_rays, look_at
from nerfdiff.field.checkpoint import load_field, save_field
from nerfdiff.field.composite import RaySampleSet, composite, composite_op
from nerfdiff.field.dataset import PosedImage, dataset_views, load_dataset, read_png, save_dataset, write_png
from nerfdiff.field.encoding import positional_encode
from nerfdiff.field.model import FieldArch, RadianceField
from nerfdiff.field.render import WHITE, render_image, render_rays
from nerfdiff.field.sampling import ray_box_bounds, sample_along_ray
from nerfdiff.field.train import FieldConfig, FieldTrainResult, train_field

__all__ = [
    "Camera", "fibonacci_sphere", "generate_ray", "generate_rays", "look_at",
    "RaySampleSet", "composite", "composite_op", "PosedImage", "dataset_views", "load_dataset", "read_png",
    "save_dataset", "write_png", "positional_encode", "FieldArch", "RadianceField", "WHITE",
    "render_image", "render_rays", "ray_box_bounds", "sample_along_ray", "FieldConfig",
    "FieldTrainResult", "train_field", "load_field", "save_field",
]
