"""
Test configuration
"""
import pytest
from click.testing import CliRunner
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

from app.core.config import Settings, settings
from app.core.database import init_db
from app.schemas.protocol import CycleConfig
from app.schemas.security import GridPreset, OptimizerConfig, PeType, SecurityParams
from app.utils.psk_ledger import PskLedger, generate_pool
from app.utils.reconciliation import generate_regular_code
from app.utils.reporting import TABLE1_DELTA, TABLE1_POINT

# Table-1 operating point
TABLE1_PARAMS = dict(s=6, delta=TABLE1_DELTA, **TABLE1_POINT)


@pytest.fixture(scope="session", autouse=True)
def artifact_dir(tmp_path_factory):
    """Parity-check and pool artifacts go to one temporary directory per run"""
    path = tmp_path_factory.mktemp("artifacts")
    previous = settings.ARTIFACT_DIR
    settings.ARTIFACT_DIR = str(path)
    yield path
    settings.ARTIFACT_DIR = previous


@pytest.fixture(autouse=True)
def restore_settings():
    """Undo settings changes made by a test (e.g. a CLI --config run)"""
    snapshot = {name: getattr(settings, name) for name in Settings.model_fields}
    yield
    for name, value in snapshot.items():
        setattr(settings, name, value)


@pytest.fixture
def db_session():
    """In-memory SQLite session with all tables"""
    engine = create_engine("sqlite://", connect_args={"check_same_thread": False},
                           poolclass=StaticPool)
    init_db(bind=engine)
    TestingSessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    db = TestingSessionLocal()
    try:
        yield db
    finally:
        db.close()


@pytest.fixture
def table1_params():
    return SecurityParams(**TABLE1_PARAMS)


@pytest.fixture
def coarse_config(table1_params):
    """CP-exact optimizer config on the coarse grid at the Table-1 point"""
    return OptimizerConfig.preset(table1_params, PeType.CP_EXACT, GridPreset.COARSE)


@pytest.fixture
def toy_code():
    """(3, 6)-regular 50 x 100 parity-check matrix"""
    return generate_regular_code(50, 100, 3, 6, seed=1)


@pytest.fixture
def ledger():
    return PskLedger(generate_pool(2 ** 16, seed=7))


@pytest.fixture
def cycle_config():
    """Noise-free two-step cycle at the Table-1 block size"""
    return CycleConfig(n_obs=2, qber=0.0, N=20000, r=5000, seed=11)


@pytest.fixture
def runner():
    return CliRunner()
