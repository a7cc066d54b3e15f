# simple convenience import for other modules
# (config.logger is imported by the CLI only: it installs handlers and creates logs/)
from . import settings
