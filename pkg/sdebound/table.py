import numpy as np
from collections import OrderedDict
from copy import deepcopy as dcopy

from . utils import check_shapes


class Labels(OrderedDict):
    """ Axis labels for a LabeledTable: an ordered mapping of axis name -> 1D array of labels.

        Float labels are matched within a per-axis precision (idx_precision, default 1e-10 for a single
        label and half the smallest spacing otherwise); integer and string labels are matched exactly.

        Example:
            labels = Labels(N=[17, 18, 19], scheme=['euler', 'gap_refiner'], column=['mean_abs_error', 'std_error'])
    """

    def __init__(self, **kwargs):
        ## Pop idx_precision from kwargs so it isn't stored as an axis.
        self.idx_precision = kwargs.pop('idx_precision', {})

        ## Look up table for exact labels (integers, strings)
        self.idx_label_lut = {}

        super().__init__(**kwargs)

    @property
    def shape(self):
        """ Shape of the table that uses these labels. """
        return tuple([len(v) for k, v in self.items()])

    def __setitem__(self, k, v):
        ## cast as numpy array
        v = np.array(v) if isinstance(v, (list, np.ndarray, tuple)) else np.array([v])

        super().__setitem__(k, v)

        if (v.dtype.kind == 'f') and (k not in self.idx_precision):
            if len(v) < 2:
                self.idx_precision[k] = 1e-10
            else:
                self.idx_precision[k] = float(np.min(np.abs(np.diff(v)))) / 2

        elif v.dtype.kind != 'f':
            self.idx_label_lut[k] = {vv.item() if hasattr(vv, 'item') else vv: i for i, vv in enumerate(v)}

    def get_axis_num(self, key):
        """ Returns the axis number that 'key' has in the table. """
        return list(self.keys()).index(key)

    def __str__(self):
        s = '{\n'
        for k, v in self.items():
            s += k + ': ' + v.__repr__() + '\n'
        return s + '}'

    def __repr__(self):
        return self.__str__()


class LabeledTable(np.ndarray):
    """ numpy array whose axes carry labels. Index with standard numpy indices, or with a dictionary of
        labels (equivalently with sel()). Dimensions indexed with a single label are removed, the same
        way numpy removes an axis indexed with an integer.

        Example:
            table = LabeledTable(labels=dict(N=[17, 18], scheme=['euler', 'cond_mean'], column=['mean_abs_error']))
            table[dict(N=18, scheme='euler', column='mean_abs_error')] = 0.42
            >>> table.sel(N=18, scheme='euler')
                LabeledTable([0.42])
    """
    def __new__(cls, input_=None, labels=None, dtype=np.float64, fill=np.nan):

        if not isinstance(labels, Labels):
            labels = Labels(**labels)

        ## create a filled array if no data is given in the constructor
        if input_ is None:
            obj = np.full(labels.shape, fill, dtype=dtype).view(cls)

        else:
            obj = np.asarray(input_, dtype=dtype).view(cls)

            if not check_shapes(obj.shape, labels.shape):
                raise TypeError('Axis labels of shape {} are not compatible with data of shape {}.'.format(labels.shape, obj.shape))

        obj.labels = dcopy(labels)

        return obj

    def __array_finalize__(self, obj):
        ## required method of subclasses of numpy. Sets unique member variables of new instances
        if obj is None: return
        self.labels = getattr(obj, 'labels', Labels())

    def __array_ufunc__(self, ufunc, method, *inputs, out=None, **kwargs):
        args = [i.view(np.ndarray) if isinstance(i, LabeledTable) else i for i in inputs]

        if out:
            kwargs['out'] = tuple(o.view(np.ndarray) if isinstance(o, LabeledTable) else o for o in out)

        results = super().__array_ufunc__(ufunc, method, *args, **kwargs)

        if isinstance(results, np.ndarray) and check_shapes(results.shape, self.labels.shape):
            results = results.view(LabeledTable)
            results.labels = self.labels

        return results

    def sel(self, **keys):
        return self[keys]

    def __getitem__(self, key):

        ## dictionary index: convert labels to standard numpy indices and index again
        if isinstance(key, dict):
            return self[self._v2idx(key)]

        obj = super().__getitem__(key)

        ## single values and np.newaxis results are returned as plain numpy values
        if not isinstance(obj, LabeledTable) or not len(obj.shape) or len(obj.shape) > len(self.shape):
            return obj.view(np.ndarray) if isinstance(obj, LabeledTable) else obj

        nlabels = dcopy(self.labels)

        nkey = tuple(key) if isinstance(key, tuple) else (key,)

        ## index for each axis, ':' where the key has no entry. Ellipsis jumps to the trailing axes.
        idx = [slice(None, None) for i in range(len(self.shape))]
        idx_i = 0
        for k in nkey:
            if k is Ellipsis:
                idx_i = len(idx) - (len(nkey) - idx_i)
            else:
                idx[idx_i] = k
            idx_i += 1

        for i, (k, v) in enumerate(self.labels.items()):
            if isinstance(idx[i], (int, np.integer)):
                nlabels.pop(k)
                nlabels.idx_precision.pop(k, None)
                nlabels.idx_label_lut.pop(k, None)
            else:
                nlabels[k] = v[idx[i]]

        ## revert to standard numpy array if the labels could not be kept consistent
        if not check_shapes(obj.shape, nlabels.shape):
            return obj.view(np.ndarray)

        obj.labels = nlabels
        return obj

    def __setitem__(self, key, value):
        if isinstance(key, dict):
            self[self._v2idx(key)] = value
        else:
            super().__setitem__(key, value)

    def __str__(self):
        s = np.array2string(self.view(np.ndarray), threshold=20, edgeitems=2)
        s += '\nDimensions: ' + str(self.shape)
        for k, v in self.labels.items():
            s += '\n' + k + ': ' + np.array2string(v, threshold=6, edgeitems=2)
        return s + '\n'

    def __repr__(self):
        return str(self)

    def _v2idx(self, dct_idx):
        ## converts a dictionary of labels (single labels or label slices) to a tuple of numpy indices
        np_index = [slice(None, None) for i in range(len(self.shape))]
        dim_keys = list(self.labels.keys())

        for k, v in dct_idx.items():
            if k not in dim_keys:
                raise TypeError('Invalid index key: {}'.format(k))

            np_i = dim_keys.index(k)
            d_labels = self.labels[k]

            is_idx_slice = isinstance(v, slice)
            if not is_idx_slice:
                v = slice(v, v, None)

            ## approximate matching for float labels
            if k in self.labels.idx_precision.keys():
                precision = self.labels.idx_precision[k]
                s_temp = []
                for v_s in [v.start, v.stop]:
                    if v_s is None:
                        s_temp.append(None)
                        continue
                    label_diff = np.abs(v_s - d_labels)
                    if np.min(label_diff) > precision:
                        raise KeyError('Label {} is outside the precision given for axis {}.'.format(v_s, k))
                    s_temp.append(int(np.argmin(label_diff)))

                s_start, s_stop = s_temp
                s_stop = s_stop + 1 if s_stop is not None else s_stop
                np_index[np_i] = slice(s_start, s_stop, v.step)

            ## exact matching otherwise
            else:
                label_lut = self.labels.idx_label_lut[k]
                for v_s in [v.start, v.stop]:
                    if v_s is not None and v_s not in label_lut:
                        raise KeyError('Label {} not found on axis {}.'.format(v_s, k))
                s_start = label_lut[v.start] if v.start is not None else None
                s_stop = label_lut[v.stop] + 1 if v.stop is not None else None
                np_index[np_i] = slice(s_start, s_stop, v.step)

            ## single labels index the axis out
            if not is_idx_slice:
                np_index[np_i] = int(np_index[np_i].start)

        return tuple(np_index)

    def save(self, filepath):
        """
        Saves the table to disk as a numpy structured array (.npy) holding the data and its labels.
        """
        label_value = []
        label_dtype = []

        ## dtype for a structured array is a tuple in the format (name, dtype, shape)
        for k, v in self.labels.items():
            label_value.append(v)
            label_dtype.append((k, v.dtype, v.shape))

        value = [self.view(np.ndarray), tuple(label_value)]
        dtype = [('data', self.dtype, self.shape), ('labels', label_dtype, (1,))]

        structure = np.array([tuple(value)], dtype=dtype)

        np.save(filepath, structure)

    @classmethod
    def load(cls, filepath):
        """
        Loads a LabeledTable saved with save().
        """
        structure = np.load(filepath)

        labels_s = structure['labels'][0]
        data = structure['data'][0]

        labels = Labels(**{k: labels_s[k][0] for k in labels_s.dtype.names})

        return cls(data, labels=labels, dtype=data.dtype)
