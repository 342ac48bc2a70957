/**
 * In-pipeline access to the centripetal codec for data loaders: generate
 * supervision maps, evaluate the relaxation mask and relaxed-L1 loss, and
 * decode prediction maps, all over contiguous typed arrays.
 *
 * The heavy lifting runs in the codec CLI (configure the interpreter with
 * CENTRIPETAL_PYTHON or a full command with CENTRIPETAL_CLI); results come
 * back bit-exact through the binary tensor container, exposed as zero-copy
 * typed-array views.  Input buffers are never mutated.
 */

import { join } from 'node:path'
import { mkdirSync, readFileSync } from 'node:fs'

import { writeAnnotations } from './annotations.js'
import { runCli, withTempDir } from './runner.js'
import { Tensor, readTensor, writeTensor } from './tensor.js'

export { Annotation, readAnnotations, writeAnnotations } from './annotations.js'
export { CliError } from './runner.js'
export { Dtype, Tensor, TensorFormatError, readTensor, writeTensor } from './tensor.js'

/** Supervision maps for one image; grids are height x width, row-major. */
export interface LabelBundle {
  height: number
  width: number
  /** union of instance kernels, {0,1} */
  kernel: Uint8Array
  /** segmentation supervision mask, {0,1} */
  mask: Uint8Array
  /** (dx, dy) per pixel toward the owning kernel's reference ring, innermost axis 2 */
  shift: Float32Array
  /** pixel ownership ids (stored exactly in float32) */
  instanceId: Float32Array
  /** kernel pixel ownership ids */
  kernelId: Float32Array
  /** shift-target cells (interior kernel ring), {0,1} */
  reference: Uint8Array
}

export interface LossConfig {
  lambda?: number
  ohemRatio?: number
  smoothL1Beta?: number
}

export interface DecodeConfig {
  threshold?: number
  connectivity?: 4 | 8
  minKernelArea?: number
  minInstanceArea?: number
  scoreThreshold?: number
  workers?: number
}

export interface DecodedRegion {
  /** closed outline, [x, y] vertices on the pixel corner grid */
  contour: number[][]
  /** mean kernel probability */
  score: number
  /** full-grid membership mask, {0,1} */
  mask: Uint8Array
}

function grid(tensor: Tensor, name: string): [number, number] {
  if (tensor.shape.length < 2) throw new Error(`${name} tensor must be at least 2-D`)
  return [tensor.shape[0], tensor.shape[1]]
}

function writeBundle(dir: string, bundle: LabelBundle): void {
  const { height, width } = bundle
  mkdirSync(dir, { recursive: true })
  writeTensor(join(dir, 'kernel.ctmp'), { dtype: 'uint8', shape: [height, width], data: bundle.kernel })
  writeTensor(join(dir, 'training_mask.ctmp'), { dtype: 'uint8', shape: [height, width], data: bundle.mask })
  writeTensor(join(dir, 'shift.ctmp'), { dtype: 'float32', shape: [height, width, 2], data: bundle.shift })
  writeTensor(join(dir, 'instance_id.ctmp'), { dtype: 'float32', shape: [height, width], data: bundle.instanceId })
  writeTensor(join(dir, 'kernel_id.ctmp'), { dtype: 'float32', shape: [height, width], data: bundle.kernelId })
  writeTensor(join(dir, 'reference.ctmp'), { dtype: 'uint8', shape: [height, width], data: bundle.reference })
}

function readBundle(dir: string): LabelBundle {
  const kernel = readTensor(join(dir, 'kernel.ctmp'))
  const [height, width] = grid(kernel, 'kernel')
  return {
    height,
    width,
    kernel: kernel.data as Uint8Array,
    mask: readTensor(join(dir, 'training_mask.ctmp')).data as Uint8Array,
    shift: readTensor(join(dir, 'shift.ctmp')).data as Float32Array,
    instanceId: readTensor(join(dir, 'instance_id.ctmp')).data as Float32Array,
    kernelId: readTensor(join(dir, 'kernel_id.ctmp')).data as Float32Array,
    reference: readTensor(join(dir, 'reference.ctmp')).data as Uint8Array,
  }
}

/**
 * Encode polygons into supervision maps.
 *
 * @param polygons  one [x, y] vertex list per instance
 * @param ignoreFlags  do-not-care markers, same length as polygons
 */
export function generateLabels(
  polygons: number[][][],
  ignoreFlags: boolean[],
  height: number,
  width: number,
  shrinkRatio = 0.7,
): LabelBundle {
  if (polygons.length !== ignoreFlags.length) {
    throw new Error('polygons and ignoreFlags must have the same length')
  }
  return withTempDir((dir) => {
    const annPath = join(dir, 'annotations.jsonl')
    writeAnnotations(
      annPath,
      polygons.map((polygon, i) => ({ polygon, ignore: ignoreFlags[i] })),
    )
    const outDir = join(dir, 'labels')
    runCli([
      'encode',
      '--annotations', annPath,
      '--height', String(height),
      '--width', String(width),
      '--out-dir', outDir,
      '--shrink-ratio', String(shrinkRatio),
    ])
    return readBundle(outDir)
  })
}

function lossArtifacts<T>(
  predShift: Float32Array,
  bundle: LabelBundle,
  cfg: LossConfig,
  pick: (outDir: string) => T,
): T {
  const { height, width } = bundle
  if (predShift.length !== height * width * 2) {
    throw new Error(`shift buffer has ${predShift.length} values, expected ${height * width * 2}`)
  }
  return withTempDir((dir) => {
    const labels = join(dir, 'labels')
    writeBundle(labels, bundle)
    // The loss command wants a probability map; the kernel map stands in,
    // since only the regression outputs are read back.
    writeTensor(join(dir, 'shift_pred.ctmp'), {
      dtype: 'float32', shape: [height, width, 2], data: predShift,
    })
    const outDir = join(dir, 'out')
    const args = [
      'loss',
      '--prob', join(labels, 'kernel.ctmp'),
      '--shift', join(dir, 'shift_pred.ctmp'),
      '--labels', labels,
      '--out-dir', outDir,
    ]
    if (cfg.lambda !== undefined) args.push('--lambda', String(cfg.lambda))
    if (cfg.ohemRatio !== undefined) args.push('--ohem-ratio', String(cfg.ohemRatio))
    if (cfg.smoothL1Beta !== undefined) args.push('--smooth-l1-beta', String(cfg.smoothL1Beta))
    runCli(args)
    return pick(outDir)
  })
}

/**
 * Relaxation mask for a predicted shift field: 1 where the prediction still
 * needs a gradient, 0 where its rounded target already lands in the right
 * region.
 */
export function computeRegressionMask(
  predShift: Float32Array,
  bundle: LabelBundle,
  cfg: LossConfig = {},
): Uint8Array {
  return lossArtifacts(predShift, bundle, cfg, (outDir) =>
    readTensor(join(outDir, 'regression_mask.ctmp')).data as Uint8Array,
  )
}

/**
 * Relaxed-L1 regression loss and its gradient with respect to the predicted
 * shift field (gradient unweighted by the total-loss lambda).
 */
export function relaxedL1Loss(
  predShift: Float32Array,
  bundle: LabelBundle,
  cfg: LossConfig = {},
): { loss: number; grad: Float32Array } {
  return lossArtifacts(predShift, bundle, cfg, (outDir) => {
    const report = JSON.parse(readFileSync(join(outDir, 'report.json'), 'utf8')) as {
      reg_loss: number
    }
    return {
      loss: report.reg_loss,
      grad: readTensor(join(outDir, 'reg_grad_shift.ctmp')).data as Float32Array,
    }
  })
}

/** Decode prediction maps into text regions (contour, score, pixel mask). */
export function decode(
  prob: Tensor,
  shift: Tensor,
  cfg: DecodeConfig = {},
): DecodedRegion[] {
  const [height, width] = grid(prob, 'probability')
  return withTempDir((dir) => {
    writeTensor(join(dir, 'prob.ctmp'), prob)
    writeTensor(join(dir, 'shift.ctmp'), shift)
    const detsPath = join(dir, 'dets.jsonl')
    const mapPath = join(dir, 'map.ctmp')
    const args = [
      'decode',
      '--prob', join(dir, 'prob.ctmp'),
      '--shift', join(dir, 'shift.ctmp'),
      '--out', detsPath,
      '--instance-map', mapPath,
    ]
    if (cfg.threshold !== undefined) args.push('--threshold', String(cfg.threshold))
    if (cfg.connectivity !== undefined) args.push('--connectivity', String(cfg.connectivity))
    if (cfg.minKernelArea !== undefined) args.push('--min-kernel-area', String(cfg.minKernelArea))
    if (cfg.minInstanceArea !== undefined) args.push('--min-instance-area', String(cfg.minInstanceArea))
    if (cfg.scoreThreshold !== undefined) args.push('--score-threshold', String(cfg.scoreThreshold))
    if (cfg.workers !== undefined) args.push('--workers', String(cfg.workers))
    runCli(args)

    const detections = readFileSync(detsPath, 'utf8')
      .split('\n')
      .filter((line) => line.trim().length > 0)
      .map((line) => JSON.parse(line) as { polygon: number[][]; score: number })
    const instanceMap = readTensor(mapPath).data as Float32Array

    // Detections are ordered by kernel id; the instance map stores those ids.
    const ids = [...new Set(instanceMap)].filter((v) => v > 0).sort((a, b) => a - b)
    return detections.map((det, index) => {
      const id = ids[index]
      const mask = new Uint8Array(height * width)
      for (let i = 0; i < instanceMap.length; i++) {
        if (instanceMap[i] === id) mask[i] = 1
      }
      return { contour: det.polygon, score: det.score, mask }
    })
  })
}
