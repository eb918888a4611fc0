# noqa: A005
from .core import *

__all__ = [
    'complex',
    'dm',
    'herm',
    'psd',
    'traceless_herm',
    'unitary',
]
