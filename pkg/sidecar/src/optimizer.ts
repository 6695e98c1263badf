/**
 * Adam with linear warmup, linear decay to zero, decoupled weight decay and
 * global gradient-norm clipping: the fine-tuning recipe of the pipeline
 * (beta1 0.9, beta2 0.999, epsilon 1e-6, warmup over 10% of the schedule,
 * weight decay 0.01, clip norm 1.0).
 */

import * as tf from "@tensorflow/tfjs";

export interface ScheduleConfig {
  peakLearningRate: number;
  totalSteps: number;
  warmupSteps: number;
}

export function learningRateAt(step: number, schedule: ScheduleConfig): number {
  const { peakLearningRate, totalSteps, warmupSteps } = schedule;
  if (totalSteps <= 0) return 0;
  const decayed = peakLearningRate * Math.max(0, 1 - step / totalSteps);
  if (step < warmupSteps && warmupSteps > 0) {
    return peakLearningRate * (step / warmupSteps);
  }
  return decayed;
}

/**
 * Warmup length for "10% of samples": warmup ends at the first optimizer
 * step by which a tenth of all training samples have been consumed. With
 * uniform batches this coincides with 10% of steps; the two readings only
 * differ through ragged final batches.
 */
export function warmupStepsForSamples(
  batchSamples: number[],
  epochs: number,
  warmupFraction: number
): number {
  const perEpoch = batchSamples.reduce((a, b) => a + b, 0);
  const target = warmupFraction * perEpoch * epochs;
  let seen = 0;
  let step = 0;
  for (let epoch = 0; epoch < epochs; epoch++) {
    for (const n of batchSamples) {
      if (seen >= target) return step;
      seen += n;
      step += 1;
    }
  }
  return step;
}

export interface AdamConfig {
  beta1: number;
  beta2: number;
  epsilon: number;
  weightDecay: number;
  gradNormClip: number;
}

export const DEFAULT_ADAM: AdamConfig = {
  beta1: 0.9,
  beta2: 0.999,
  epsilon: 1e-6,
  weightDecay: 0.01,
  gradNormClip: 1.0,
};

export class AdamWithSchedule {
  private step = 0;
  private readonly firstMoment = new Map<string, tf.Variable>();
  private readonly secondMoment = new Map<string, tf.Variable>();

  constructor(
    private readonly schedule: ScheduleConfig,
    private readonly config: AdamConfig = DEFAULT_ADAM
  ) {}

  get currentStep(): number {
    return this.step;
  }

  /** One update from a loss thunk; returns the loss value. */
  minimize(lossFn: () => tf.Scalar, variables: tf.Variable[]): number {
    const { value, grads } = tf.variableGrads(lossFn, variables);
    const loss = value.dataSync()[0];
    value.dispose();
    const lr = learningRateAt(this.step, this.schedule);
    this.applyGradients(grads, variables, lr);
    this.step += 1;
    for (const g of Object.values(grads)) g.dispose();
    return loss;
  }

  private applyGradients(
    grads: tf.NamedTensorMap,
    variables: tf.Variable[],
    lr: number
  ): void {
    const { beta1, beta2, epsilon, weightDecay, gradNormClip } = this.config;
    tf.tidy(() => {
      const names = variables.map((v) => v.name);
      const squared = names.map((name) => grads[name].square().sum());
      const globalNorm = tf.stack(squared).sum().sqrt();
      const scaleValue = Math.min(
        1,
        gradNormClip / (globalNorm.dataSync()[0] + 1e-12)
      );
      const t = this.step + 1;
      const correction1 = 1 - Math.pow(beta1, t);
      const correction2 = 1 - Math.pow(beta2, t);
      for (const variable of variables) {
        const name = variable.name;
        const grad = grads[name].mul(scaleValue);
        if (!this.firstMoment.has(name)) {
          this.firstMoment.set(
            name,
            tf.variable(tf.zerosLike(variable), false, `${name}/m`)
          );
          this.secondMoment.set(
            name,
            tf.variable(tf.zerosLike(variable), false, `${name}/v`)
          );
        }
        const m = this.firstMoment.get(name)!;
        const v = this.secondMoment.get(name)!;
        m.assign(m.mul(beta1).add(grad.mul(1 - beta1)));
        v.assign(v.mul(beta2).add(grad.square().mul(1 - beta2)));
        const mHat = m.div(correction1);
        const vHat = v.div(correction2);
        const update = mHat
          .div(vHat.sqrt().add(epsilon))
          .add(variable.mul(weightDecay));
        variable.assign(variable.sub(update.mul(lr)));
      }
    });
  }

  dispose(): void {
    for (const m of this.firstMoment.values()) m.dispose();
    for (const v of this.secondMoment.values()) v.dispose();
    this.firstMoment.clear();
    this.secondMoment.clear();
  }
}
