# logger.py
import logging
import os
from datetime import datetime

from config import settings

# Create logs folder if not exists
if not os.path.exists(settings.LOG_DIR):
    os.makedirs(settings.LOG_DIR)

# Log file with timestamp (daily log)
log_filename = os.path.join(settings.LOG_DIR, datetime.now().strftime("cgnn_%Y-%m-%d.log"))

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s",
    handlers=[
        logging.FileHandler(log_filename, encoding="utf-8"),
        logging.StreamHandler()
    ]
)

logger = logging.getLogger("CgnnApp")


def set_verbosity(verbose: bool):
    logging.getLogger().setLevel(logging.DEBUG if verbose else logging.INFO)
