from .app import create_app
from .models import ToyPrototypeModel, load_model

__version__ = "0.1.0"
