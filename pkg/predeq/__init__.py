from .utils import *

# double precision is required by the tolerances used throughout the library
set_precision('double')

from . import random  # noqa: E402
from .collapse import *  # noqa: E402
from .collision import *  # noqa: E402
from .denmat import *  # noqa: E402
from .errors import *  # noqa: E402
from .io import *  # noqa: E402
from .measurement import *  # noqa: E402
from .options import *  # noqa: E402
from .progress_meter import *  # noqa: E402
from .result import *  # noqa: E402
from .transport import *  # noqa: E402

__version__ = '0.1.0'

# set default matmul precision to 'highest'
set_matmul_precision('highest')
