from .global_settings import *
