import logging
import os
import sys

from basics.base_model import build_model
from basics.errors import ConfigError
from data_gen.datasets import build_datasets
from utils.io_utils import provenance, write_csv, write_json

log_format = '%(asctime)s %(message)s'
SCHEMA_VERSION = 1
# keys that change where or how fast a run goes, never what it computes
RUNTIME_KEYS = ('out_dir', 'debug', 'threads')

logger = logging.getLogger(__name__)


def setup_logging(debug=False):
    logging.basicConfig(stream=sys.stdout, level=logging.DEBUG if debug else logging.INFO,
                        format=log_format, datefmt='%m/%d %I:%M:%S %p', force=True)


class BaseTask:
    '''
        Base class for command-line tasks.
        1. *__init__*:
            validate the resolved config, build the model and the datasets;
        2. *write_csv* and *write_json*:
            write outputs under out_dir with the provenance of the run;
        3. *start*:
            build the task from hparams and run it.

        Subclasses should define:
        1. *name*:
            the subcommand and default output sub-directory;
        2. *run*:
            the computation and its outputs.
    '''
    name = ''

    def __init__(self, hparams):
        if hparams.get('schema_version', SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f'Unsupported schema_version {hparams.get("schema_version")}; '
                              f'this version reads {SCHEMA_VERSION}.')
        if hparams.get('seed') is None:
            raise ConfigError('A seed is mandatory.')
        if 'model' not in hparams:
            raise ConfigError('Config needs a model section.')
        self.hparams = hparams
        self.seed = int(hparams['seed'])
        self.out_dir = hparams.get('out_dir') or os.path.join('outputs', self.name)
        self.num_workers = max(1, int(hparams.get('threads') or 1))
        self.provenance = provenance({k: v for k, v in hparams.items() if k not in RUNTIME_KEYS}, self.seed)

        self.model = build_model(hparams['model'])
        self.historical, self.current = build_datasets(hparams.get('data'), self.seed)
        self.model.check_data(self.historical)
        if self.current is not None:
            self.model.check_data(self.current)
        logger.info(f'| {self.name}: {self.model.family} {self.model.hyperparameters()}, '
                    f'seed={self.seed}, out_dir={self.out_dir}')

    def out_path(self, fn):
        return os.path.join(self.out_dir, fn)

    def write_csv(self, fn, columns, rows):
        write_csv(self.out_path(fn), columns, rows, self.provenance)
        logger.info(f'| wrote {self.out_path(fn)}')

    def write_json(self, fn, obj):
        write_json(self.out_path(fn), obj, self.provenance)
        logger.info(f'| wrote {self.out_path(fn)}')

    def run(self):
        raise NotImplementedError

    @classmethod
    def start(cls, hparams):
        task = cls(hparams)
        return task.run()
