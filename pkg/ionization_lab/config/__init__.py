from .settings import RunConfig, load_config, parse_config_text

__all__ = ["RunConfig", "load_config", "parse_config_text"]
