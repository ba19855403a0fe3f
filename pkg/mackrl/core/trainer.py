"""Actor-critic training loop for MACKRL and its baselines.

Every algorithm shares the same scaffolding: parallel environment workers
collect a batch of on-policy episodes, the critic regresses onto TD(lambda)
targets, then the actor takes one Adam step along the advantage-weighted
gradient of the log policy. What changes between algorithms is the actor
and the critic:

=========  ===========================  ======================
algorithm  actor                        critic
=========  ===========================  ======================
mackrl     pairwise policy tree         central V(s, u_prev)
central-v  independent tree             central V(s, u_prev)
iac        independent tree             per-agent V(z^a)
jal        joint policy on all obs.     central V(s, u_prev)
ck-jal     joint policy on common kn.   central V(s, u_prev)
=========  ===========================  ======================
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from mackrl.core.approximator import ExplorationSchedule, Optimiser, checkpoint_files, save_checkpoint
from mackrl.core.critic import AgentCritic, CentralCritic
from mackrl.core.joint_action_policy import JointActionPolicy
from mackrl.core.correlated_sampling import CorrelatedSampler
from mackrl.core.policy_tree import PolicyTree, build_policy_tree
from mackrl.envs import make_env
from mackrl.envs.episode import Episode, EpisodeBatch, Transition
from mackrl.errors import DomainError, MackrlError, TrainingDivergedError
from mackrl.utils.metrics import MetricWriter
from mackrl.utils.seeding import derive_seed, episode_seed, make_rng
from mackrl.utils.worker_pool import WorkerPool, available_workers

logger = logging.getLogger(__name__)

TRAIN_STREAM = 1
EVAL_STREAM = 2
INIT_STREAM = 3


def build_actor(config, env, rng):
    """Policy tree or joint-action policy for the configured algorithm"""
    sampler = CorrelatedSampler(config.correlated_sampler, config.holenstein_gamma)
    if config.algorithm in ("mackrl", "central-v", "iac"):
        return build_policy_tree(env.n_agents, env.n_actions, env.group_feature_size,
                                 env.agent_feature_size, config.tree_settings(), rng)
    elif config.algorithm == "jal":
        return JointActionPolicy(env.n_agents, env.n_actions, env.joint_feature_size, "union",
                                 config.architecture, config.hidden_size, sampler, rng, config.init_scale)
    elif config.algorithm == "ck-jal":
        return JointActionPolicy(env.n_agents, env.n_actions, env.group_feature_size, "common",
                                 config.architecture, config.hidden_size, sampler, rng, config.init_scale)
    raise DomainError(f"Unknown algorithm '{config.algorithm}'")


def build_critic(config, env, rng):
    """Per-agent critic for IAC, central critic otherwise"""
    kwargs = dict(hidden_size=config.critic_hidden_size, rng=rng, lr=config.lr_critic,
                  target_update_interval=config.target_update_interval)
    if config.algorithm == "iac":
        return AgentCritic(env.agent_feature_size, env.n_agents, **kwargs)
    return CentralCritic(env.state_feature_size, env.n_agents, env.n_actions, **kwargs)


def count_disagreements(traces):
    """1 if the agents' traces disagree on any shared decision, else 0"""
    if not traces:
        return 0
    if any("joint" in t for t in traces):
        return int(len({t.get("joint") for t in traces}) > 1)
    if len({t.get("partition") for t in traces}) > 1:
        return 1
    choices = {}
    for trace in traces:
        for group, choice in trace.get("pairs", {}).items():
            choices.setdefault(group, set()).add(choice)
    return int(any(len(c) > 1 for c in choices.values()))


def delegation_records(actor, env, traces):
    """(CK richness bucket, delegated) for every pair controller that acted"""
    if not isinstance(actor, PolicyTree):
        return []
    records = []
    seen = set()
    for agent, trace in enumerate(traces):
        for group, choice in trace.get("pairs", {}).items():
            if group in seen or agent != group[0]:
                continue
            seen.add(group)
            records.append((env.ck_richness(group, group[0]), choice == actor.delegate_index))
    return records


def run_episode(env, actor, shared_seed, env_rng, epsilon=0.0, greedy=False,
                decentralised=True, index=0):
    """Play one episode; every agent picks its own action from the shared seed"""
    env.reset(env_rng)
    hidden = {a: actor.initial_hidden() for a in range(env.n_agents)}
    episode = Episode(index=index)
    prev_action = None
    done = False
    while not done:
        inputs = env.tree_inputs()
        if hidden[0] is not None:
            inputs.agent_hidden = dict(hidden)
        step_seed = shared_seed.at(env.t)
        if decentralised:
            traces = [{} for _ in range(env.n_agents)]
            joint_action = tuple(
                actor.select_action(a, inputs, step_seed, greedy, epsilon, traces[a])
                for a in range(env.n_agents)
            )
        else:
            joint_action, trace = actor.sample_joint_action(inputs, step_seed, greedy, epsilon)
            traces = [trace] * env.n_agents
        state = env.state_features()
        delegations = delegation_records(actor, env, traces)
        log_prob = None if greedy else float(np.log(actor.joint_policy(joint_action, inputs, epsilon=epsilon)))
        world = env.world_state()
        reward, done = env.step(joint_action)
        episode.transitions.append(Transition(
            state=state,
            inputs=inputs,
            joint_action=tuple(int(u) for u in joint_action),
            reward=reward,
            seed=step_seed,
            prev_action=prev_action,
            delegations=delegations,
            disagreements=count_disagreements(traces) if decentralised else 0,
            world=world,
            log_prob=log_prob,
        ))
        hidden = {a: actor.next_hidden(a, inputs) for a in range(env.n_agents)}
        prev_action = tuple(int(u) for u in joint_action)
    return episode


def critic_step(batch, critic, td_lambda=0.8, gamma=1.0):
    """One TD(lambda) regression step; returns the loss"""
    return critic.step(batch, gamma, td_lambda)


def check_on_policy(transition, log_prob, tolerance=1e-9):
    """Raise if the actor no longer gives a collected joint action its logged probability"""
    if transition.log_prob is None:
        return
    if abs(log_prob - transition.log_prob) > tolerance:
        raise DomainError(
            f"Joint action {transition.joint_action} was collected with log-prob {transition.log_prob:.6f} "
            f"but the actor now gives {log_prob:.6f}; batches must be on-policy"
        )


def policy_gradient(batch, actor, critic, gamma=1.0):
    """Advantage-weighted gradient of the log policy, averaged over episodes

    With a central critic every step has one scalar advantage and the
    gradient is taken through the marginal joint policy. With a per-agent
    critic each agent's own log policy is weighted by its own advantage.
    """
    grads = np.zeros(actor.parameter_size())
    per_agent = isinstance(critic, AgentCritic)
    for episode in batch:
        advantages = critic.advantages(episode, gamma)
        for t, transition in enumerate(episode.transitions):
            if per_agent:
                for a, u in enumerate(transition.joint_action):
                    if advantages[a, t] == 0.0:
                        continue
                    _, g = actor.log_individual_policy_grad(a, u, transition.inputs, batch.epsilon)
                    grads += advantages[a, t] * g
            else:
                if advantages[0, t] == 0.0:
                    continue
                log_prob, g = actor.log_joint_policy_and_grad(transition.joint_action, transition.inputs,
                                                              epsilon=batch.epsilon)
                check_on_policy(transition, log_prob)
                grads += advantages[0, t] * g
    return grads / max(len(batch), 1)


def policy_gradient_step(batch, actor, critic, optimiser, gamma=1.0):
    """Ascend the policy gradient with one Adam step; returns the gradient"""
    grads = policy_gradient(batch, actor, critic, gamma)
    actor.set_parameters(optimiser.step(actor.get_parameters(), -grads))
    return grads


@dataclass
class TrainResult:
    run_id: str
    seed: int
    env_steps: int
    final_return: float
    metrics: object
    out_dir: object = None
    outputs: tuple = ()


class Trainer:
    """Runs collect / critic_step / policy_gradient_step with periodic greedy evaluation"""

    def __init__(self, config, seed=0, out_dir=None, settings=None):
        self.config = config
        self.seed = int(seed)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.n_workers = available_workers(config.n_envs, settings)
        self.envs = [make_env(config.env, config.env_config) for _ in range(config.n_envs)]
        env = self.envs[0]
        init_rng = make_rng(self.seed, INIT_STREAM)
        self.actor = build_actor(config, env, init_rng)
        self.critic = build_critic(config, env, init_rng)
        self.optimiser = Optimiser(self.actor.parameter_size(), lr=config.lr_actor)
        self.schedule = ExplorationSchedule(config.epsilon_start, config.epsilon_end, config.epsilon_anneal_steps)
        self.decentralised = config.algorithm != "jal"
        self.env_steps = 0
        self.episodes_collected = 0
        self.critic_losses = []
        csv_path = self.out_dir / f"metrics_seed{self.seed}.csv" if self.out_dir is not None else None
        self.metrics = MetricWriter(csv_path, config.run_id, self.seed)
        self.outputs = [csv_path] if csv_path is not None else []
        logger.info(
            f"Trainer ready: {config.algorithm} on {config.env}, seed {self.seed}, "
            f"{self.actor.parameter_size()} actor parameters, {self.n_workers} worker threads"
        )
        if env.n_agents > 2 and config.algorithm in ("jal", "ck-jal"):
            logger.warning(f"Joint action space has {env.n_actions ** env.n_agents} entries")

    # -- collection ----------------------------------------------------------

    def collect(self, n_episodes, epsilon=0.0, greedy=False, first_index=0, stream=TRAIN_STREAM, pool=None):
        """EpisodeBatch of ``n_episodes`` episodes spread across the env workers

        Episode i always uses env worker i mod n_envs, its own environment
        stream and its own shared seed, so the batch is independent of the
        thread count.
        """
        n_envs = len(self.envs)
        run_seed = derive_seed(self.seed, stream)

        def work(worker):
            env = self.envs[worker]
            episodes = []
            for i in range(worker, n_episodes, n_envs):
                index = first_index + i
                try:
                    episodes.append(run_episode(
                        env, self.actor, episode_seed(run_seed, index), make_rng(self.seed, stream, index),
                        epsilon, greedy, self.decentralised, index,
                    ))
                except MackrlError as e:
                    logger.error(f"Episode {index} failed on worker {worker}: {e}")
                    raise
            return episodes

        pool = pool or WorkerPool(1)
        per_worker = pool.map(work, range(min(n_envs, n_episodes)))
        episodes = sorted((e for chunk in per_worker for e in chunk), key=lambda e: e.index)
        return EpisodeBatch(episodes, epsilon, greedy)

    # -- evaluation and diagnostics --------------------------------------------

    def evaluate(self, pool=None):
        """Greedy evaluation on the eval stream; records and returns the mean return"""
        if self.config.eval_episodes == 0:
            return None
        batch = self.collect(self.config.eval_episodes, 0.0, True, 0, EVAL_STREAM, pool)
        values = {"return": batch.mean_return, "delegation_rate": batch.delegation_rate}
        values.update(self._bucket_rates(batch))
        self.metrics.record_many(self.env_steps, "eval", values)
        logger.info(f"[{self.env_steps} steps] greedy return {batch.mean_return:.4f}")
        return batch.mean_return

    def _bucket_rates(self, batch):
        return {
            f"delegation_rate_ck{bucket}": delegated / total
            for bucket, (delegated, total) in sorted(batch.delegation_counts().items())
        }

    # -- divergence handling -------------------------------------------------

    def _check_finite(self, what, values):
        if np.all(np.isfinite(values)):
            return
        dump_dir = self.dump_diagnostics(what)
        raise TrainingDivergedError(f"Non-finite {what} after {self.env_steps} env steps", dump_dir)

    def dump_diagnostics(self, reason):
        """Write actor, critic and a summary under out_dir/diagnostic"""
        if self.out_dir is None:
            return None
        dump_dir = self.out_dir / "diagnostic"
        save_checkpoint(dump_dir / "actor", self.actor.get_parameters(), {"reason": reason})
        save_checkpoint(dump_dir / "critic", self.critic.get_parameters(), {"reason": reason})
        summary = {
            "reason": reason,
            "seed": self.seed,
            "env_steps": self.env_steps,
            "episodes": self.episodes_collected,
            "recent_critic_losses": [float(x) for x in self.critic_losses[-10:]],
            "config": self.config.to_dict(),
        }
        with open(dump_dir / "summary.yaml", "w") as f:
            yaml.safe_dump(summary, f, default_flow_style=False)
        logger.error(f"Diagnostic dump written to {dump_dir}")
        return dump_dir

    # -- main loop -------------------------------------------------------------

    def train_iteration(self, pool=None):
        """Collect one batch, then one critic step and one actor step"""
        epsilon = self.schedule.value(self.env_steps)
        batch = self.collect(self.config.batch_size, epsilon, False, self.episodes_collected, TRAIN_STREAM, pool)
        self.episodes_collected += len(batch)
        self.env_steps += batch.env_steps

        loss = critic_step(batch, self.critic, self.config.td_lambda, self.config.gamma)
        self.critic_losses.append(loss)
        self._check_finite("critic loss", [loss])
        self._check_finite("critic parameters", self.critic.get_parameters())

        grads = policy_gradient_step(batch, self.actor, self.critic, self.optimiser, self.config.gamma)
        self._check_finite("policy gradient", grads)
        self._check_finite("actor parameters", self.actor.get_parameters())

        values = {
            "return": batch.mean_return,
            "critic_loss": loss,
            "epsilon": epsilon,
            "delegation_rate": batch.delegation_rate,
            "disagreement_rate": batch.disagreement_rate,
        }
        values.update(self._bucket_rates(batch))
        self.metrics.record_many(self.env_steps, "train", values)
        return batch

    def run(self):
        """Train until the step budget is spent; returns a TrainResult"""
        next_eval = self.config.eval_interval
        final_return = None
        with WorkerPool(self.n_workers) as pool:
            while self.env_steps < self.config.total_env_steps:
                batch = self.train_iteration(pool)
                logger.debug(f"[{self.env_steps} steps] train return {batch.mean_return:.4f}")
                final_return = None
                if self.env_steps >= next_eval:
                    final_return = self.evaluate(pool)
                    while next_eval <= self.env_steps:
                        next_eval += self.config.eval_interval
            if final_return is None:
                final_return = self.evaluate(pool)
        if final_return is None:
            final_return = float("nan")
        if self.out_dir is not None and self.config.checkpoint:
            self.save()
        logger.info(f"Training finished after {self.env_steps} env steps, final greedy return {final_return:.4f}")
        return TrainResult(self.config.run_id, self.seed, self.env_steps, final_return,
                           self.metrics.frame(), self.out_dir, tuple(self.outputs))

    def save(self):
        """Checkpoint actor and critic under out_dir/checkpoints"""
        header = {
            "algorithm": self.config.algorithm,
            "seed": self.seed,
            "env_steps": self.env_steps,
            "heads": self.actor.describe(),
        }
        ckpt_dir = self.out_dir / "checkpoints"
        actor_path = save_checkpoint(ckpt_dir / f"actor_seed{self.seed}", self.actor.get_parameters(), header)
        critic_path = save_checkpoint(ckpt_dir / f"critic_seed{self.seed}", self.critic.get_parameters(),
                                      {"algorithm": self.config.algorithm, "seed": self.seed})
        for path in (actor_path, critic_path):
            self.outputs.extend(checkpoint_files(path))


def train(config, seed=0, out_dir=None, settings=None):
    """Train one seed of a run config; returns a TrainResult"""
    return Trainer(config, seed, out_dir, settings).run()


def iac_train(config, seed=0, out_dir=None, settings=None):
    """train() with independent actor-critics"""
    return train(config.with_value("algorithm", "iac"), seed, out_dir, settings)


def jal_train(config, seed=0, out_dir=None, settings=None):
    """train() with a centralised joint-action learner"""
    return train(config.with_value("algorithm", "jal"), seed, out_dir, settings)


def ckjal_train(config, seed=0, out_dir=None, settings=None):
    """train() with a joint-action learner on common knowledge only"""
    return train(config.with_value("algorithm", "ck-jal"), seed, out_dir, settings)
