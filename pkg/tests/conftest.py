import copy

from core.flow import LabelCloudFlow
from core.logger import configure
from core.settings import Settings
from core.stages import Stages
from tests.fixtures.e2e import *
from tests.fixtures.scenes import *
from tests.fixtures.sequence import *

SETTINGS_BACKUP: dict | None = None


@pytest.fixture(scope="function", autouse=True)
def reset_labelcloud():
    """Reset settings, stages and flow for each test automatically."""
    # Create backup for default Settings
    global SETTINGS_BACKUP

    if SETTINGS_BACKUP is None:
        SETTINGS_BACKUP = {
            k: copy.deepcopy(getattr(Settings, k)) for k in Settings.__annotations__.keys()
        }

    # wait for test to finish
    yield

    # Settings
    Settings.Persistent.keys.clear()
    for k, v in SETTINGS_BACKUP.items():
        Settings.set(k, v)
    configure()

    # Stages
    Stages.stages.clear()

    # Flow
    if LabelCloudFlow.instance is not None:
        LabelCloudFlow.instance.shutdown()
    LabelCloudFlow.instance = None
