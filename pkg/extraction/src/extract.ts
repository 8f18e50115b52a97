/** Offline extraction: images -> manifest + feature tensors.

For every input image: the original ranked prediction; ROI proposals
prompted with the predicted superclass name; three boxes per ROI (the box
and its delta/2*delta expansions) cropped, resized, and classified with and
without Gaussian blur at each sigma; the penultimate feature tensor saved as
TOTF.  With an attack configured, the adversarial variant is crafted first,
saved as an 8-bit image, and everything above runs on the saved image.
*/

import * as fs from 'fs'
import * as path from 'path'

import { pgdAttack } from './attack'
import { crop, expandRoi, gaussianBlur, readPng, resizeBilinear, RgbImage, writePng } from './image'
import { ManifestRecord, PrecomputedPreds, sigmaKey, writeManifest } from './manifest'
import { Classifier } from './model'
import { DEFAULT_SCORE_THRESHOLD, Proposal, segment } from './segmenter'
import { superNameOf, Taxonomy } from './taxonomy'
import { writeTotf } from './totf'

export interface ExtractionJob {
  model: Classifier
  taxonomy: Taxonomy
  /** (path, fine label) pairs */
  inputs: Array<{ path: string; label: number }>
  outDir: string
  sigmas: number[]
  split: 'train' | 'test'
  attack: 'none' | 'pgd'
  epsilon: number
  delta: number
  cropSize: number
  scoreThreshold: number
}

export const EXTRACT_DEFAULTS = {
  sigmas: [0.0, 1.5, 2.0],
  split: 'test' as const,
  attack: 'none' as const,
  epsilon: 0.03,
  delta: 5,
  cropSize: 224,
  scoreThreshold: DEFAULT_SCORE_THRESHOLD,
}

export interface ExtractResult {
  manifestPath: string
  metaPath: string
  records: ManifestRecord[]
}

function secondPredictions(
  model: Classifier,
  image: RgbImage,
  proposals: Proposal[],
  sigma: number,
  delta: number,
  cropSize: number,
): number[] {
  const out: number[] = []
  for (const proposal of proposals) {
    for (const box of expandRoi(proposal.box, delta, image.width, image.height)) {
      let view = resizeBilinear(crop(image, box), cropSize, cropSize)
      if (sigma > 0) view = gaussianBlur(view, sigma)
      out.push(model.predict(view).classes[0])
    }
  }
  return out
}

export function extract(job: ExtractionJob): ExtractResult {
  if (!job.sigmas.length) throw new Error('sigma list must be nonempty')
  if (job.attack !== 'none' && !(job.epsilon > 0)) throw new Error('attack budget must be > 0')
  fs.mkdirSync(path.join(job.outDir, 'images'), { recursive: true })
  fs.mkdirSync(path.join(job.outDir, 'features'), { recursive: true })

  const records: ManifestRecord[] = []
  for (const [index, input] of job.inputs.entries()) {
    const id = `${job.split}${String(index).padStart(5, '0')}`
    let image = readPng(input.path)
    let imageRel = `images/${id}.png`
    if (job.attack === 'pgd') {
      image = pgdAttack(job.model, image, input.label, { epsilon: job.epsilon })
      imageRel = `images/${id}_adv.png`
    }
    // the saved 8-bit image is the record of truth; reload it so every
    // downstream prediction sees exactly what the manifest points at
    writePng(image, path.join(job.outDir, imageRel))
    image = readPng(path.join(job.outDir, imageRel))

    const orig = job.model.predict(image)
    const prompt = superNameOf(job.taxonomy, orig.classes[0])
    const proposals = segment(image, prompt, job.scoreThreshold)

    const blur: Record<string, number[]> = {}
    for (const sigma of job.sigmas) {
      blur[sigmaKey(sigma)] = secondPredictions(
        job.model, image, proposals, sigma, job.delta, job.cropSize,
      )
    }
    const noblur = secondPredictions(job.model, image, proposals, 0, job.delta, job.cropSize)

    // training rows are ROI-restricted; test rows use the whole image
    let featureSource = image
    if (job.split === 'train' && proposals.length) {
      featureSource = crop(image, proposals[0].box)
    }
    const { features } = job.model.predictWithFeatures(featureSource)
    const featureRel = `features/${id}.totf`
    writeTotf(features, path.join(job.outDir, featureRel))

    const preds: PrecomputedPreds = {
      orig: orig.classes,
      second_blur: blur,
      second_noblur: noblur,
    }
    records.push({
      id,
      split: job.split,
      label_fine: input.label,
      label_super: job.taxonomy.fineToSuper[input.label],
      image_path: imageRel,
      feature_path: featureRel,
      rois: proposals.map((p) => p.box),
      preds,
      adversarial: job.attack !== 'none',
      ...(job.attack !== 'none' ? { attack: job.attack } : {}),
    })
  }

  const manifestPath = path.join(job.outDir, 'manifest.jsonl')
  writeManifest(records, manifestPath)
  const metaPath = path.join(job.outDir, 'meta.json')
  fs.writeFileSync(
    metaPath,
    JSON.stringify(
      {
        segmenter_threshold: job.scoreThreshold,
        sigmas: job.sigmas,
        delta: job.delta,
        crop_size: job.cropSize,
        attack: job.attack,
        epsilon: job.attack === 'none' ? null : job.epsilon,
        model: job.model.meta,
      },
      null,
      2,
    ) + '\n',
  )
  return { manifestPath, metaPath, records }
}

/** Discover `<images>/<fine_id>/*.png` dataset layouts. */
export function discoverInputs(root: string): Array<{ path: string; label: number }> {
  const inputs: Array<{ path: string; label: number }> = []
  for (const entry of fs.readdirSync(root).sort()) {
    const label = Number(entry)
    const dir = path.join(root, entry)
    if (!Number.isInteger(label) || !fs.statSync(dir).isDirectory()) continue
    for (const file of fs.readdirSync(dir).sort()) {
      if (file.endsWith('.png')) inputs.push({ path: path.join(dir, file), label })
    }
  }
  if (!inputs.length) throw new Error(`no <fine_id>/*.png inputs under ${root}`)
  return inputs
}
