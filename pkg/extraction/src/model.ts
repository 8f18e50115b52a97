/** Classifier wrapper: a small CNN with persisted deterministic weights.

Real ImageNet-pretrained checkpoints are not fetchable in this environment,
so `makeModel` materializes a fixed-seed network once and saves it; the rest
of the pipeline treats the saved directory exactly like any pretrained
model: load, predict ranked classes, expose the penultimate conv features.
*/

import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

import { RgbImage, resizeBilinear } from './image'
import { FeatureTensor } from './totf'

export interface ModelMeta {
  inputSize: number
  classes: number
  featureLayer: string
  seed: number
}

export interface Ranked {
  classes: number[]
  scores: number[]
}

/** Deterministic PRNG (mulberry32) for reproducible weight generation. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a |= 0
    a = (a + 0x6d2b79f5) | 0
    let t = Math.imul(a ^ (a >>> 15), 1 | a)
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

function seededNormal(rand: () => number): () => number {
  return () => {
    const u = Math.max(rand(), 1e-12)
    const v = rand()
    return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v)
  }
}

const FEATURE_LAYER = 'features'

function buildNetwork(inputSize: number, classes: number): tf.LayersModel {
  const input = tf.input({ shape: [inputSize, inputSize, 3] })
  let x = tf.layers
    .conv2d({ filters: 8, kernelSize: 3, padding: 'same', activation: 'relu', name: 'conv1' })
    .apply(input) as tf.SymbolicTensor
  x = tf.layers.maxPooling2d({ poolSize: 2, name: 'pool1' }).apply(x) as tf.SymbolicTensor
  x = tf.layers
    .conv2d({ filters: 12, kernelSize: 3, padding: 'same', activation: 'relu', name: 'conv2' })
    .apply(x) as tf.SymbolicTensor
  x = tf.layers.maxPooling2d({ poolSize: 2, name: 'pool2' }).apply(x) as tf.SymbolicTensor
  const features = tf.layers
    .conv2d({ filters: 16, kernelSize: 3, padding: 'same', activation: 'relu', name: FEATURE_LAYER })
    .apply(x) as tf.SymbolicTensor
  const pooled = tf.layers.globalAveragePooling2d({ name: 'gap' }).apply(features) as tf.SymbolicTensor
  const probs = tf.layers
    .dense({ units: classes, activation: 'softmax', name: 'head' })
    .apply(pooled) as tf.SymbolicTensor
  return tf.model({ inputs: input, outputs: probs })
}

function seedWeights(model: tf.LayersModel, seed: number): void {
  const rand = seededNormal(mulberry32(seed))
  const replaced = model.getWeights().map((w) => {
    const fanIn = w.shape.length > 1 ? w.shape.slice(0, -1).reduce((a, b) => a * (b ?? 1), 1) : 1
    const scale = w.shape.length > 1 ? Math.sqrt(2 / fanIn) : 0.1
    const values = new Float32Array(w.size)
    for (let i = 0; i < values.length; i++) values[i] = scale * rand()
    return tf.tensor(values, w.shape as number[])
  })
  model.setWeights(replaced)
  replaced.forEach((t) => t.dispose())
}

export class Classifier {
  private constructor(
    readonly meta: ModelMeta,
    private readonly network: tf.LayersModel,
    private readonly withFeatures: tf.LayersModel,
  ) {}

  static wrap(network: tf.LayersModel, meta: ModelMeta): Classifier {
    const featureOut = network.getLayer(meta.featureLayer).output as tf.SymbolicTensor
    const withFeatures = tf.model({
      inputs: network.inputs,
      outputs: [featureOut, network.outputs[0] as tf.SymbolicTensor],
    })
    return new Classifier(meta, network, withFeatures)
  }

  static create(classes: number, seed: number, inputSize = 64): Classifier {
    const network = buildNetwork(inputSize, classes)
    seedWeights(network, seed)
    return Classifier.wrap(network, { inputSize, classes, featureLayer: FEATURE_LAYER, seed })
  }

  static async load(dir: string): Promise<Classifier> {
    const meta: ModelMeta = JSON.parse(fs.readFileSync(path.join(dir, 'meta.json'), 'utf-8'))
    const spec = JSON.parse(fs.readFileSync(path.join(dir, 'model.json'), 'utf-8'))
    const weightData = fs.readFileSync(path.join(dir, 'weights.bin'))
    const network = await tf.loadLayersModel(
      tf.io.fromMemory({
        modelTopology: spec.modelTopology,
        weightSpecs: spec.weightSpecs,
        weightData: weightData.buffer.slice(
          weightData.byteOffset,
          weightData.byteOffset + weightData.byteLength,
        ),
      }),
    )
    return Classifier.wrap(network, meta)
  }

  async save(dir: string): Promise<void> {
    fs.mkdirSync(dir, { recursive: true })
    await this.network.save(
      tf.io.withSaveHandler(async (artifacts) => {
        fs.writeFileSync(
          path.join(dir, 'model.json'),
          JSON.stringify({
            modelTopology: artifacts.modelTopology,
            weightSpecs: artifacts.weightSpecs,
          }),
        )
        fs.writeFileSync(path.join(dir, 'weights.bin'), Buffer.from(artifacts.weightData as ArrayBuffer))
        return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } }
      }),
    )
    fs.writeFileSync(path.join(dir, 'meta.json'), JSON.stringify(this.meta))
  }

  private toInput(image: RgbImage): tf.Tensor4D {
    const resized =
      image.width === this.meta.inputSize && image.height === this.meta.inputSize
        ? image
        : resizeBilinear(image, this.meta.inputSize, this.meta.inputSize)
    const values = new Float32Array(resized.data.length)
    for (let i = 0; i < values.length; i++) values[i] = resized.data[i] / 255
    return tf.tensor4d(values, [1, this.meta.inputSize, this.meta.inputSize, 3])
  }

  /** Ranked class ids and probabilities, ties broken by ascending id. */
  predict(image: RgbImage): Ranked {
    const probs = tf.tidy(() => {
      const input = this.toInput(image)
      return this.network.predict(input) as tf.Tensor
    })
    const scores = probs.dataSync() as Float32Array
    probs.dispose()
    const order = Array.from(scores.keys()).sort((a, b) => scores[b] - scores[a] || a - b)
    return { classes: order, scores: order.map((i) => scores[i]) }
  }

  /** Penultimate conv activations, channel-major, plus the ranked output. */
  predictWithFeatures(image: RgbImage): { features: FeatureTensor; ranked: Ranked } {
    const [featT, probT] = tf.tidy(() => {
      const input = this.toInput(image)
      return this.withFeatures.predict(input) as tf.Tensor[]
    })
    const [, h, w, c] = featT.shape as number[]
    const hwc = featT.dataSync() as Float32Array
    const probs = probT.dataSync() as Float32Array
    featT.dispose()
    probT.dispose()
    const chw = new Float32Array(c * h * w)
    for (let ch = 0; ch < c; ch++) {
      for (let y = 0; y < h; y++) {
        for (let x = 0; x < w; x++) {
          chw[ch * h * w + y * w + x] = hwc[(y * w + x) * c + ch]
        }
      }
    }
    const order = Array.from(probs.keys()).sort((a, b) => probs[b] - probs[a] || a - b)
    return {
      features: { channels: c, height: h, width: w, values: chw },
      ranked: { classes: order, scores: order.map((i) => probs[i]) },
    }
  }

  /** Gradient of -log p(label) with respect to the resized [0,1] input. */
  inputGradient(input01: tf.Tensor4D, label: number): tf.Tensor4D {
    const lossFn = (x: tf.Tensor): tf.Tensor => {
      const probs = this.network.apply(x) as tf.Tensor2D
      const p = probs.slice([0, label], [1, 1])
      return p.clipByValue(1e-12, 1).log().neg().squeeze()
    }
    return tf.tidy(() => tf.grad(lossFn)(input01) as tf.Tensor4D)
  }

  get inputSize(): number {
    return this.meta.inputSize
  }
}
