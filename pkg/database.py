import os
import logging
from datetime import datetime
from functools import lru_cache

from sqlalchemy import create_engine, Column, Integer, String, Float, Boolean, DateTime, ForeignKey, JSON
from sqlalchemy.orm import declarative_base, sessionmaker, relationship

logger = logging.getLogger(__name__)

# Get database URL from environment variables; --db on the command line overrides it
DATABASE_URL = os.environ.get('DATABASE_URL')

Base = declarative_base()


@lru_cache(maxsize=8)
def get_engine(url=None):
    """
    Engine for the results store.

    Args:
        url (str, optional): SQLAlchemy URL, defaults to DATABASE_URL

    Returns:
        Engine or None: None when no URL is configured
    """
    url = url or DATABASE_URL
    if not url:
        return None
    kwargs = {"pool_pre_ping": True}
    if url.startswith("postgresql"):
        # SSL configuration for stable connections
        kwargs.update(pool_recycle=300, connect_args={"sslmode": "prefer"})
    return create_engine(url, **kwargs)


def get_session(url=None):
    engine = get_engine(url)
    if engine is None:
        raise RuntimeError("no database configured; set DATABASE_URL or pass --db")
    return sessionmaker(bind=engine)()


# Define database models
class ExperimentRun(Base):
    __tablename__ = 'experiment_runs'

    id = Column(Integer, primary_key=True, autoincrement=True)
    d = Column(Integer, nullable=False)
    n = Column(Integer, nullable=False)
    beta_mean = Column(Float, nullable=False)
    density = Column(String, nullable=False)
    effect_mode = Column(String, nullable=False)
    variance_spread = Column(Float, default=0.0)
    alpha = Column(Float, nullable=False)
    reps = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    methods = Column(JSON)
    summaries = Column(JSON)  # one entry per method: coverage, width, zero inclusion, time
    created_at = Column(DateTime, default=datetime.utcnow)

    replicates = relationship("ReplicateRecord", back_populates="run", cascade="all, delete-orphan")

    def to_dict(self):
        return {
            'id': self.id,
            'd': self.d,
            'n': self.n,
            'beta_mean': self.beta_mean,
            'density': self.density,
            'effect_mode': self.effect_mode,
            'variance_spread': self.variance_spread,
            'alpha': self.alpha,
            'reps': self.reps,
            'seed': self.seed,
            'methods': self.methods,
            'summaries': self.summaries,
            'created_at': self.created_at.isoformat() if self.created_at else None
        }


class ReplicateRecord(Base):
    __tablename__ = 'replicate_records'

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey('experiment_runs.id'), nullable=False, index=True)
    method = Column(String, nullable=False)
    rep = Column(Integer, nullable=False)
    true_effect = Column(Float)
    covered = Column(Boolean, nullable=True)
    width = Column(Float, nullable=True)
    includes_zero = Column(Boolean, nullable=True)
    n_intervals = Column(Integer, nullable=True)
    wall_ms = Column(Float, nullable=True)
    error = Column(String, nullable=True)

    run = relationship("ExperimentRun", back_populates="replicates")

    def to_dict(self):
        return {
            'id': self.id,
            'run_id': self.run_id,
            'method': self.method,
            'rep': self.rep,
            'true_effect': self.true_effect,
            'covered': self.covered,
            'width': self.width,
            'includes_zero': self.includes_zero,
            'n_intervals': self.n_intervals,
            'wall_ms': self.wall_ms,
            'error': self.error
        }


# Create tables if they don't exist
def init_db(url=None):
    engine = get_engine(url)
    if engine is None:
        logger.warning("no database configured, skipping initialization")
        return False
    try:
        Base.metadata.create_all(engine)
        return True
    except Exception as e:
        logger.warning("error during database initialization: %s", e)
        return False


def save_experiment(result, url=None):
    """
    Store an ExperimentResult with all of its replicate records.

    Args:
        result (ExperimentResult): Output of sim.run_experiment
        url (str, optional): Database URL, defaults to DATABASE_URL

    Returns:
        int or None: id of the new run, None when storing failed
    """
    if not init_db(url):
        return None
    spec = result.spec
    session = get_session(url)
    try:
        run = ExperimentRun(
            d=spec.d,
            n=spec.n,
            beta_mean=spec.beta_mean,
            density=spec.density,
            effect_mode=spec.effect_mode,
            variance_spread=spec.variance_spread,
            alpha=spec.alpha,
            reps=spec.reps,
            seed=spec.seed,
            methods=list(spec.methods),
            summaries=[
                {
                    'method': s.method,
                    'coverage': s.coverage,
                    'mean_width': s.mean_width,
                    'zero_inclusion': s.zero_inclusion,
                    'mean_wall_ms': s.mean_wall_ms,
                    'completed': s.completed,
                    'failures': s.failures
                }
                for s in result.summaries
            ]
        )
        for record in result.records:
            run.replicates.append(ReplicateRecord(
                method=record.method,
                rep=record.rep,
                true_effect=record.true_effect,
                covered=record.covered,
                width=record.width,
                includes_zero=record.includes_zero,
                n_intervals=record.n_intervals,
                wall_ms=record.wall_ms,
                error=record.error
            ))
        session.add(run)
        session.commit()
        logger.info("stored experiment run %s with %d replicate records", run.id, len(result.records))
        return run.id
    except Exception as e:
        session.rollback()
        logger.warning("error storing experiment: %s", e)
        return None
    finally:
        session.close()


# Fetch data from the database
def fetch_experiments(url=None):
    session = get_session(url)
    try:
        runs = session.query(ExperimentRun).order_by(ExperimentRun.id).all()
        return [run.to_dict() for run in runs]
    finally:
        session.close()


def fetch_replicates(run_id, url=None):
    session = get_session(url)
    try:
        records = session.query(ReplicateRecord).filter_by(run_id=run_id).order_by(ReplicateRecord.id).all()
        return [record.to_dict() for record in records]
    finally:
        session.close()


def check_connection(url=None):
    engine = get_engine(url)
    if engine is None:
        return False
    try:
        conn = engine.connect()
        conn.close()
        return True
    except Exception as e:
        logger.warning("database connection error: %s", e)
        return False
