import pytest

from app.config import Settings, get_settings


@pytest.fixture
def clean_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


def test_defaults():
    settings = Settings(_env_file=None)
    assert settings.BASE_CELLS == 8
    assert settings.GAUSS_POINTS == 4
    assert settings.IDENTITY_TOLERANCE == 1e-5
    assert settings.SEED == 12345
    assert settings.THREADS == 1


def test_environment_overrides_use_prefix(monkeypatch, clean_settings):
    monkeypatch.setenv("WILLMORE_BASE_CELLS", "12")
    monkeypatch.setenv("WILLMORE_LOG_LEVEL", "DEBUG")
    settings = get_settings()
    assert settings.BASE_CELLS == 12
    assert settings.LOG_LEVEL == "DEBUG"


def test_get_settings_is_cached(clean_settings):
    assert get_settings() is get_settings()
