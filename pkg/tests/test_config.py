import json
import logging

import pytest

from framework.config_manager import OUTPUT_DIR_ENV, ConfigManager, ExperimentConfig, validate_experiment_config
from mtrpo.errors import ConfigError


def write(path, text):
    path.write_text(text, encoding='utf-8')
    return str(path)


class TestLoadConfig:

    def test_without_a_file(self):
        manager = ConfigManager()
        assert manager.load_config() == {}
        assert manager.build({}, environ={}) == ExperimentConfig()

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ConfigManager(str(tmp_path / 'absent.ini')).load_config()

    def test_template_round_trip_gives_defaults(self, tmp_path):
        manager = ConfigManager(str(tmp_path / 'mtrpo.ini'))
        path = manager.generate_template()
        loaded = ConfigManager(path).load_config()
        assert manager.build(loaded, environ={}) == ExperimentConfig()
        assert loaded['logging']['log_level'] == 'INFO'
        assert loaded['logging']['log_file'] is None

    def test_template_is_not_overwritten(self, tmp_path):
        manager = ConfigManager(str(tmp_path / 'mtrpo.ini'))
        manager.generate_template()
        with pytest.raises(FileExistsError):
            manager.generate_template()
        assert manager.generate_template(overwrite=True).endswith('mtrpo.ini')

    def test_ini_types(self, tmp_path):
        path = write(tmp_path / 'run.ini', '[experiment]\nn_seeds = 3\nzetas = 0.1, 0.2\n'
                                           'init_from_default = yes\n[regularizer]\nlambda = 0.05\n')
        config = ConfigManager(path).build(ConfigManager(path).load_config(), environ={})
        assert config.n_seeds == 3
        assert config.zetas == (0.1, 0.2)
        assert config.init_from_default is True
        assert config.lam == 0.05

    def test_json_with_nested_sections(self, tmp_path):
        document = {'n_seeds': 4, 'k_values': [5, 10], 'regularizer': {'lambda': 0.5, 'kind': 'habit'},
                    'optimizer': {'eta': 0.1, 'mode': 'sampled'}, 'logging': {'log_level': 'DEBUG'}}
        path = write(tmp_path / 'run.json', json.dumps(document))
        manager = ConfigManager(path)
        loaded = manager.load_config()
        assert loaded['logging']['log_level'] == 'DEBUG'
        config = manager.build(loaded, environ={})
        assert (config.n_seeds, config.k_values, config.lam, config.eta) == (4, (5, 10), 0.5, 0.1)

    @pytest.mark.parametrize('name, text', [
        ('bad.ini', '[experiment]\nnot_a_setting = 1\n'),
        ('bad.ini', '[plotting]\ndpi = 300\n'),
        ('bad.ini', '[experiment]\nn_seeds = many\n'),
        ('bad.ini', 'n_seeds = 3\n'),
        ('bad.json', '{"n_seeds": '),
        ('bad.json', '[1, 2]'),
    ])
    def test_malformed_files(self, tmp_path, name, text):
        with pytest.raises(ConfigError):
            ConfigManager(write(tmp_path / name, text)).load_config()


class TestBuild:

    def test_precedence(self, tmp_path):
        manager = ConfigManager()
        file_values = {'experiment': {'output_dir': 'from_file', 'n_seeds': 7}}
        environ = {OUTPUT_DIR_ENV: 'from_env'}
        assert manager.build({}, environ=environ).output_dir == 'from_env'
        assert manager.build(file_values, environ=environ).output_dir == 'from_file'
        config = manager.build(file_values, overrides={'output_dir': 'from_flag', 'n_seeds': '2'}, environ=environ)
        assert (config.output_dir, config.n_seeds) == ('from_flag', 2)

    def test_none_overrides_are_ignored(self):
        config = ConfigManager().build({'experiment': {'n_tasks': 9}}, overrides={'n_tasks': None}, environ={})
        assert config.n_tasks == 9

    def test_arm_fields_are_ignored_with_a_warning(self, caplog):
        file_values = {'regularizer': {'kind': 'entropy', 'distill_delay': 5.0},
                       'optimizer': {'max_updates': 10, 'mode': 'exact'}}
        with caplog.at_level(logging.WARNING, logger='mtrpo.config'):
            assert ConfigManager().build(file_values, environ={}) == ExperimentConfig()
        ignored = [record.getMessage() for record in caplog.records if record.levelno == logging.WARNING]
        assert len(ignored) == 4
        assert any('[regularizer] kind' in message for message in ignored)

    def test_json_regularizer_kind_is_reported(self, tmp_path, caplog):
        path = write(tmp_path / 'run.json', json.dumps({'regularizer': {'kind': 'habit', 'distill_delay': 0}}))
        manager = ConfigManager(path)
        with caplog.at_level(logging.WARNING, logger='mtrpo.config'):
            config = manager.build(manager.load_config(), environ={})
        assert config == ExperimentConfig()
        messages = ' '.join(record.getMessage() for record in caplog.records)
        assert 'kind' in messages and 'distill_delay' in messages

    @pytest.mark.parametrize('overrides', [
        {'n_seeds': 0}, {'gamma': 1.0}, {'p_geometric': 1.5}, {'experiment': 'plots'},
        {'zetas': '0.1, 2.0'}, {'zetas': '0.6'}, {'workers': 'two'}, {'ewma_weight': 0.0}, {'n_tasks': 2.5},
    ])
    def test_invalid_values(self, overrides):
        with pytest.raises(ConfigError):
            ConfigManager().build({}, overrides=overrides, environ={})


class TestExperimentConfig:

    @pytest.mark.parametrize('experiment, expected', [
        ('fixed-baselines', 0.5), ('learned-baselines', 0.7), ('delay-sweep', 0.7), ('concentration', 0.5),
    ])
    def test_tree_p_defaults(self, experiment, expected):
        assert ExperimentConfig(experiment=experiment).tree_p == expected
        assert ExperimentConfig(experiment=experiment, p_geometric=0.3).tree_p == 0.3

    def test_delay_steps(self):
        assert ExperimentConfig(env_steps_per_task=1000).delay_steps() == [0.0, 100.0, 250.0, 500.0, 750.0, 1000.0]
        assert ExperimentConfig(delays=(0.0, 5.0)).delay_steps() == [0.0, 5.0]

    def test_dict_uses_lambda(self):
        document = ExperimentConfig().to_dict()
        assert document['lambda'] == 0.2
        assert 'lam' not in document

    def test_default_alpha_grid(self):
        alphas = ExperimentConfig().alphas
        assert len(alphas) == 101
        assert (alphas[0], alphas[50], alphas[-1]) == (0.0, 0.5, 1.0)

    def test_defaults_are_valid(self):
        validate_experiment_config(ExperimentConfig())

    def test_zetas_up_to_the_uniform_policy_are_accepted(self):
        config = ConfigManager().build({}, overrides={'zetas': '0.0, 0.5'}, environ={})
        assert config.zetas == (0.0, 0.5)
