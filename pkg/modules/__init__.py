# modules/__init__.py
# make handlers importable via `from modules import ...` (dependency order)
from . import errors
from . import graph_core
from . import rewiring
from . import spectral
from . import commute
from . import oracle
from . import backends
from . import cgnn
from . import analysis
from . import datasets
