/** Projected gradient descent on the L-inf ball, quantized to 8-bit output. */

import * as tf from '@tensorflow/tfjs'

import { RgbImage, resizeBilinear } from './image'
import { Classifier } from './model'

export interface AttackOptions {
  /** L-inf budget on the [0,1] pixel scale */
  epsilon?: number
  steps?: number
  stepSize?: number
}

/**
 * Craft an adversarial image against the true label.
 *
 * The perturbation is optimized at the model's input resolution and the
 * result is quantized to an 8-bit image before anything downstream sees it,
 * so the attack budget survives exactly one round trip through storage.
 */
export function pgdAttack(
  model: Classifier,
  image: RgbImage,
  label: number,
  options: AttackOptions = {},
): RgbImage {
  const epsilon = options.epsilon ?? 0.03
  const steps = options.steps ?? 10
  const stepSize = options.stepSize ?? epsilon / 4
  const size = model.inputSize
  const resized = resizeBilinear(image, size, size)
  const base = new Float32Array(resized.data.length)
  for (let i = 0; i < base.length; i++) base[i] = resized.data[i] / 255

  let advValues = base.slice()
  for (let step = 0; step < steps; step++) {
    const advT = tf.tensor4d(advValues, [1, size, size, 3])
    const grad = model.inputGradient(advT, label)
    const gradValues = grad.dataSync() as Float32Array
    advT.dispose()
    grad.dispose()
    for (let i = 0; i < advValues.length; i++) {
      const stepped = advValues[i] + stepSize * Math.sign(gradValues[i])
      const lo = Math.max(base[i] - epsilon, 0)
      const hi = Math.min(base[i] + epsilon, 1)
      advValues[i] = Math.min(Math.max(stepped, lo), hi)
    }
  }

  const data = new Uint8Array(advValues.length)
  for (let i = 0; i < advValues.length; i++) {
    data[i] = Math.min(Math.max(Math.round(advValues[i] * 255), 0), 255)
  }
  return { width: size, height: size, data }
}

export function maxAbsDelta(a: RgbImage, b: RgbImage): number {
  if (a.data.length !== b.data.length) throw new Error('image size mismatch')
  let worst = 0
  for (let i = 0; i < a.data.length; i++) {
    worst = Math.max(worst, Math.abs(a.data[i] - b.data[i]))
  }
  return worst / 255
}
