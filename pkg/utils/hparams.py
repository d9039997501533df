import multiprocessing
import os
import re

import yaml

from basics.errors import ConfigError

global_print_hparams = True
hparams = {}
is_main_process = not bool(re.match(r'Process-\d+', multiprocessing.current_process().name))


class Args:
    def __init__(self, **kwargs):
        for k, v in kwargs.items():
            self.__setattr__(k, v)


def override_config(old_config: dict, new_config: dict):
    for k, v in new_config.items():
        if isinstance(v, dict) and isinstance(old_config.get(k), dict):
            override_config(old_config[k], new_config[k])
        else:
            old_config[k] = v


def _cast(value: str, old):
    if old is None or isinstance(old, (list, dict)):
        return yaml.safe_load(value)
    if isinstance(old, bool):
        if value not in ('True', 'False', 'true', 'false'):
            raise ConfigError(f'Expected a boolean, got \'{value}\'.')
        return value in ('True', 'true')
    return type(old)(value)


def apply_overrides(config: dict, hparams_str: str):
    """``"k=v,grid.J=10"``: dotted keys reach into sections; values are cast to the type already there."""
    if not hparams_str:
        return config
    for new_hparam in hparams_str.split(','):
        if '=' not in new_hparam:
            raise ConfigError(f'Bad --hparams entry \'{new_hparam}\', expected key=value.')
        k, v = new_hparam.split('=', 1)
        *path, leaf = k.strip().split('.')
        node = config
        for p in path:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f'--hparams: \'{p}\' in \'{k}\' is not a section.')
        try:
            node[leaf] = _cast(v.strip(), node.get(leaf))
        except ValueError as e:
            raise ConfigError(f'--hparams: cannot set {k}={v}: {e}') from e
    return config


def load_config(config_fn, loaded_config=None, config_chains=None):
    """Read a YAML file, resolving its ``base_config`` chain depth-first."""
    loaded_config = set() if loaded_config is None else loaded_config
    config_chains = [] if config_chains is None else config_chains
    if not os.path.exists(config_fn):
        raise ConfigError(f'Config file \'{config_fn}\' does not exist.')
    with open(config_fn, encoding='utf-8') as f:
        try:
            hparams_ = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f'{config_fn}: {e}') from e
    if not isinstance(hparams_, dict):
        raise ConfigError(f'{config_fn}: top level must be a mapping.')
    loaded_config.add(config_fn)
    if 'base_config' in hparams_:
        ret_hparams = {}
        if not isinstance(hparams_['base_config'], list):
            hparams_['base_config'] = [hparams_['base_config']]
        for c in hparams_['base_config']:
            if c.startswith('.'):
                c = os.path.normpath(f'{os.path.dirname(config_fn)}/{c}')
            if c not in loaded_config:
                override_config(ret_hparams, load_config(c, loaded_config, config_chains))
        override_config(ret_hparams, hparams_)
    else:
        ret_hparams = hparams_
    config_chains.append(config_fn)
    return ret_hparams


def set_hparams(config='', hparams_str='', out_dir='', print_hparams=True, global_hparams=True, debug=False):
    """
        Load hparams from multiple sources:
        1. config chain (i.e. first load base_config, then load config);
        2. argument --hparams or hparams_str, as temporary modification;
        3. if an output directory is given, the resolved config is saved there as 'config.yaml'.
    """
    args = Args(config=config, hparams=hparams_str, out_dir=out_dir, debug=debug)
    if args.config == '':
        raise ConfigError('A config file must be specified.')

    config_chains = []
    hparams_ = load_config(args.config, config_chains=config_chains)
    hparams_.pop('base_config', None)
    apply_overrides(hparams_, args.hparams)
    if args.out_dir:
        hparams_['out_dir'] = args.out_dir
    hparams_['debug'] = args.debug

    if hparams_.get('out_dir') and is_main_process:
        os.makedirs(hparams_['out_dir'], exist_ok=True)
        with open(os.path.join(hparams_['out_dir'], 'config.yaml'), 'w', encoding='utf-8') as f:
            yaml.safe_dump(hparams_, f, allow_unicode=True, sort_keys=True)

    global global_print_hparams
    if global_hparams:
        hparams.clear()
        hparams.update(hparams_)

    if is_main_process and print_hparams and global_print_hparams and global_hparams:
        print('| Hparams chains: ', config_chains)
        print('| Hparams: ')
        for i, (k, v) in enumerate(sorted(hparams_.items())):
            print(f"\033[;33;m{k}\033[0m: {v}, ", end="\n" if i % 5 == 4 else "")
        print("")
        global_print_hparams = False
    return hparams_
