from .dynaconf_settings import LabSettings, GetSettings

__all__ = ["LabSettings", "LoadConfig"]


def LoadConfig() -> LabSettings:
    """Load lab settings using dynaconf.

    Returns:
        LabSettings: Instance with loaded values from settings files and environment.

    Example:
        lab = LoadConfig()
        print(lab.certificate_delta)
    """
    try:
        return GetSettings()
    except Exception as e:
        raise RuntimeError(f"Failed to load configuration: {e}") from e
